#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace dgnet::cli {

enum ExitCode : int { kOk = 0, kRuntimeError = 1, kUsageError = 2 };

/// Runs one subcommand. `args` excludes the program name.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dgnet::cli
