#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "dgnet/tensor.hpp"

namespace dgnet {

/// Evaluates the loss at the current parameter values.
using LossFn = std::function<double()>;
/// Identifies the smooth piece the last loss evaluation landed on (see
/// Graph::branch_signature).
using SignatureFn = std::function<std::uint64_t()>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t coordinates_checked = 0;
  // Coordinates whose +-eps probes crossed a kink and were not compared.
  std::size_t coordinates_skipped = 0;
  // Location of the worst coordinate.
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Relative error with a max(|a|, |n|, 1e-12) denominator.
double relative_error(double analytic, double numeric);

/// Central-difference check of `analytic` (one gradient per parameter
/// tensor) against `loss`. Parameters are perturbed in place and restored.
/// When `max_coords_per_tensor` is set, that many coordinates are sampled per
/// tensor with a generator seeded by `sample_seed`; otherwise every
/// coordinate is checked.
///
/// With a `signature`, a coordinate whose perturbed evaluations land on a
/// different smooth piece than the unperturbed point is skipped, since a
/// central difference across a kink does not estimate the derivative. When
/// sampling, skipped coordinates are replaced by further draws.
GradCheckResult grad_check(const LossFn& loss, std::span<Tensor* const> params,
                           std::span<const Tensor> analytic, double eps,
                           std::optional<std::size_t> max_coords_per_tensor = std::nullopt,
                           std::uint64_t sample_seed = 0, const SignatureFn& signature = {});

}  // namespace dgnet
