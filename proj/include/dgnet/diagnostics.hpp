#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dgnet/gradcheck.hpp"
#include "dgnet/network.hpp"

namespace dgnet {

struct PrimitiveCheck {
  std::string name;
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
};

/// Finite-difference check of every primitive's backward pass on random
/// inputs, one run per seed. The loss is a random projection of the output.
std::vector<PrimitiveCheck> check_primitives(std::size_t seeds = 20, double eps = 1e-5);

/// Checks the full Siamese network under the combined loss on a random
/// mixed-label batch. `coords_per_tensor` samples coordinates per
/// parameter tensor; unset checks every coordinate.
GradCheckResult check_network(const NetworkSpec& spec, std::uint64_t seed, double eps = 1e-5,
                              std::optional<std::size_t> coords_per_tensor = 24, std::size_t pairs = 4);

}  // namespace dgnet
