#include "dgnet/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dgnet/error.hpp"

namespace dgnet {

AugmentConfig AugmentConfig::none() { return {0.0, 0.0, 0.0, 0, 0}; }

void AugmentConfig::validate() const {
  if (!(gaussian_sigma >= 0.0)) throw ConfigError("gaussian_sigma must be nonnegative");
  if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) throw ConfigError("flip_prob must lie in [0,1]");
  if (!(max_rotation_deg >= 0.0)) throw ConfigError("max_rotation_deg must be nonnegative");
  if (max_translate_px < 0) throw ConfigError("max_translate_px must be nonnegative");
}

Tensor hflip(const Tensor& image) {
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  Tensor out(image.shape());
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) out.at(ch, y, x) = image.at(ch, y, w - 1 - x);
    }
  }
  return out;
}

Tensor rotate(const Tensor& image, double degrees) {
  if (degrees == 0.0) return image;
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  const double rad = degrees * std::numbers::pi / 180.0;
  const double cs = std::cos(rad), sn = std::sin(rad);
  const double cy = (static_cast<double>(h) - 1.0) / 2.0;
  const double cx = (static_cast<double>(w) - 1.0) / 2.0;
  Tensor out(image.shape());
  auto sample = [&](std::size_t ch, double fy, double fx) {
    const double y0f = std::floor(fy), x0f = std::floor(fx);
    const double ty = fy - y0f, tx = fx - x0f;
    const auto y0 = static_cast<std::int64_t>(y0f), x0 = static_cast<std::int64_t>(x0f);
    double acc = 0.0;
    for (int dy = 0; dy < 2; ++dy) {
      for (int dx = 0; dx < 2; ++dx) {
        const std::int64_t yy = y0 + dy, xx = x0 + dx;
        if (yy < 0 || xx < 0 || yy >= static_cast<std::int64_t>(h) || xx >= static_cast<std::int64_t>(w)) continue;
        const double wgt = (dy ? ty : 1.0 - ty) * (dx ? tx : 1.0 - tx);
        acc += wgt * image.at(ch, static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
      }
    }
    return acc;
  };
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      // Inverse map: rotate the destination coordinate by -angle.
      const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
      const double sx = cs * dx - sn * dy + cx;
      const double sy = sn * dx + cs * dy + cy;
      for (std::size_t ch = 0; ch < c; ++ch) out.at(ch, y, x) = sample(ch, sy, sx);
    }
  }
  return out;
}

Tensor translate(const Tensor& image, std::int64_t dx, std::int64_t dy) {
  if (dx == 0 && dy == 0) return image;
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  Tensor out(image.shape());
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < h; ++y) {
      const std::int64_t sy = static_cast<std::int64_t>(y) - dy;
      if (sy < 0 || sy >= static_cast<std::int64_t>(h)) continue;
      for (std::size_t x = 0; x < w; ++x) {
        const std::int64_t sx = static_cast<std::int64_t>(x) - dx;
        if (sx < 0 || sx >= static_cast<std::int64_t>(w)) continue;
        out.at(ch, y, x) = image.at(ch, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
      }
    }
  }
  return out;
}

Tensor augment(const Tensor& image, const AugmentConfig& cfg, Rng& rng) {
  if (image.rank() != 3) throw ShapeError("augment expects a [C,H,W] image");
  // Draw every parameter up front so the stream layout never depends on
  // which transforms end up active.
  const bool flip = rng.uniform() < cfg.flip_prob;
  const double angle = rng.uniform(-cfg.max_rotation_deg, cfg.max_rotation_deg);
  const std::int64_t dx = rng.integer(-cfg.max_translate_px, cfg.max_translate_px);
  const std::int64_t dy = rng.integer(-cfg.max_translate_px, cfg.max_translate_px);

  Tensor out = flip ? hflip(image) : image;
  out = rotate(out, angle);
  out = translate(out, dx, dy);
  if (cfg.gaussian_sigma > 0.0) {
    for (auto& v : out.data()) v += cfg.gaussian_sigma * rng.normal();
  }
  for (auto& v : out.data()) v = std::clamp(v, 0.0, 1.0);
  return out;
}

}  // namespace dgnet
