#pragma once

#include <cstdint>

#include "dgnet/rng.hpp"
#include "dgnet/tensor.hpp"

namespace dgnet {

struct AugmentConfig {
  double gaussian_sigma = 0.02;   // on [0,1]-scaled pixels
  double flip_prob = 0.5;
  double max_rotation_deg = 10.0;
  std::int64_t max_translate_px = 2;
  std::uint64_t seed = 0;

  static AugmentConfig none();
  void validate() const;
};

Tensor hflip(const Tensor& image);
/// Counter-clockwise rotation about the image centre, bilinear, zero fill.
Tensor rotate(const Tensor& image, double degrees);
/// Integer shift, zero fill.
Tensor translate(const Tensor& image, std::int64_t dx, std::int64_t dy);

/// flip -> rotate -> translate -> noise, then clamp to [0,1]. Every draw
/// comes from `rng`, so equal generator states give identical output.
Tensor augment(const Tensor& image, const AugmentConfig& cfg, Rng& rng);

}  // namespace dgnet
