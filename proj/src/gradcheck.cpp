#include "dgnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "dgnet/error.hpp"

namespace dgnet {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-12});
  return std::abs(analytic - numeric) / denom;
}

GradCheckResult grad_check(const LossFn& loss, std::span<Tensor* const> params,
                           std::span<const Tensor> analytic, double eps,
                           std::optional<std::size_t> max_coords_per_tensor,
                           std::uint64_t sample_seed, const SignatureFn& signature) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) throw DomainError("grad_check eps must lie in [1e-7, 1e-3]");
  if (params.size() != analytic.size()) throw ShapeError("one analytic gradient per parameter tensor required");

  GradCheckResult result;
  std::mt19937_64 rng(sample_seed);
  std::uint64_t base_signature = 0;
  if (signature) {
    loss();
    base_signature = signature();
  }
  for (std::size_t t = 0; t < params.size(); ++t) {
    Tensor& p = *params[t];
    if (analytic[t].shape() != p.shape()) {
      throw ShapeError("analytic gradient " + std::to_string(t) + " has the wrong shape");
    }
    std::vector<std::size_t> coords(p.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    std::size_t budget = coords.size();
    if (max_coords_per_tensor && coords.size() > *max_coords_per_tensor) {
      std::shuffle(coords.begin(), coords.end(), rng);
      budget = *max_coords_per_tensor;
    }
    std::size_t checked = 0;
    for (auto i : coords) {
      if (checked == budget) break;
      const double saved = p[i];
      p[i] = saved + eps;
      const double up = loss();
      const bool up_smooth = !signature || signature() == base_signature;
      p[i] = saved - eps;
      const double down = loss();
      const bool down_smooth = !signature || signature() == base_signature;
      p[i] = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw NumericError("non-finite loss at perturbed coordinate " + std::to_string(i) +
                           " of tensor " + std::to_string(t));
      }
      if (!up_smooth || !down_smooth) {
        ++result.coordinates_skipped;
        continue;
      }
      ++checked;
      const double numeric = (up - down) / (2.0 * eps);
      const double err = relative_error(analytic[t][i], numeric);
      ++result.coordinates_checked;
      if (err > result.max_relative_error) {
        result.max_relative_error = err;
        result.worst_tensor = t;
        result.worst_index = i;
        result.worst_analytic = analytic[t][i];
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace dgnet
