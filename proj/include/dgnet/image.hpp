#pragma once

#include <cstdint>
#include <filesystem>

#include "dgnet/tensor.hpp"

namespace dgnet {

struct BBox {
  std::int64_t x = 0;
  std::int64_t y = 0;
  std::int64_t w = 0;
  std::int64_t h = 0;
  friend bool operator==(const BBox&, const BBox&) = default;
};

/// Reads binary PGM (P5) / PPM (P6) scaled to [0,1], or a `.f64` raw tensor
/// (three little-endian u32 extents C,H,W followed by float64 data).
Tensor read_image(const std::filesystem::path& path);

void write_pgm(const std::filesystem::path& path, const Tensor& image);
void write_f64(const std::filesystem::path& path, const Tensor& image);

Tensor crop(const Tensor& image, const BBox& box);
/// Half-pixel-centred bilinear resampling; identity when sizes match.
Tensor resize_bilinear(const Tensor& image, std::size_t height, std::size_t width);
/// Grey <-> colour conversion by channel mean or replication.
Tensor convert_channels(const Tensor& image, std::size_t channels);

}  // namespace dgnet
