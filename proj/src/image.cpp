#include "dgnet/image.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "dgnet/error.hpp"

namespace dgnet {

namespace {

std::string slurp(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open image: " + path.string());
  return std::string(std::istreambuf_iterator<char>(f), {});
}

// Parses one whitespace-delimited header integer, skipping '#' comments.
std::size_t pnm_header_int(const std::string& bytes, std::size_t& pos, const std::string& name) {
  while (pos < bytes.size()) {
    if (bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
      ++pos;
    } else {
      break;
    }
  }
  std::size_t value = 0;
  const std::size_t start = pos;
  while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
    value = value * 10 + static_cast<std::size_t>(bytes[pos] - '0');
    ++pos;
  }
  if (pos == start) throw FormatError("malformed PNM header in " + name);
  return value;
}

Tensor read_pnm(const std::string& bytes, const std::string& name) {
  const bool colour = bytes[1] == '6';
  std::size_t pos = 2;
  const auto width = pnm_header_int(bytes, pos, name);
  const auto height = pnm_header_int(bytes, pos, name);
  const auto maxval = pnm_header_int(bytes, pos, name);
  if (width == 0 || height == 0) throw FormatError("zero-sized image: " + name);
  if (maxval == 0 || maxval > 255) throw FormatError("only 8-bit PNM (maxval 1..255) is supported: " + name);
  ++pos;  // single whitespace byte before the raster
  const std::size_t channels = colour ? 3 : 1;
  if (bytes.size() < pos + channels * width * height) throw FormatError("truncated PNM raster: " + name);

  Tensor img({channels, height, width});
  const double scale = 1.0 / static_cast<double>(maxval);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      for (std::size_t c = 0; c < channels; ++c) {
        const auto raw = static_cast<unsigned char>(bytes[pos + (y * width + x) * channels + c]);
        img.at(c, y, x) = std::min(1.0, raw * scale);
      }
    }
  }
  return img;
}

std::uint32_t u32_le(const std::string& bytes, std::size_t pos) {
  std::uint32_t v = 0;
  for (std::size_t i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
  return v;
}

Tensor read_f64(const std::string& bytes, const std::string& name) {
  if (bytes.size() < 12) throw FormatError("truncated .f64 header: " + name);
  const Shape shape{u32_le(bytes, 0), u32_le(bytes, 4), u32_le(bytes, 8)};
  if (shape[0] == 0 || shape[1] == 0 || shape[2] == 0) throw FormatError("zero extent in .f64 file: " + name);
  const std::size_t n = shape_size(shape);
  if (bytes.size() != 12 + 8 * n) throw FormatError(".f64 payload length does not match header: " + name);
  std::vector<double> data(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t bits = 0;
    for (std::size_t b = 0; b < 8; ++b) {
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[12 + 8 * i + b])) << (8 * b);
    }
    data[i] = std::bit_cast<double>(bits);
  }
  Tensor t(shape, std::move(data));
  if (!t.all_finite()) throw FormatError("non-finite pixel in " + name);
  return t;
}

}  // namespace

Tensor read_image(const std::filesystem::path& path) {
  const std::string bytes = slurp(path);
  const std::string name = path.string();
  if (path.extension() == ".f64") return read_f64(bytes, name);
  if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '5' || bytes[1] == '6')) return read_pnm(bytes, name);
  throw FormatError("unsupported image format (expected P5/P6 PNM or .f64): " + name);
}

void write_pgm(const std::filesystem::path& path, const Tensor& image) {
  if (image.rank() != 3 || (image.dim(0) != 1 && image.dim(0) != 3)) {
    throw ShapeError("write_pgm expects a [1|3,H,W] tensor");
  }
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  std::string out = (c == 1 ? "P5\n" : "P6\n") + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double v = std::clamp(image.at(ch, y, x), 0.0, 1.0);
        out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
      }
    }
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write image: " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

void write_f64(const std::filesystem::path& path, const Tensor& image) {
  if (image.rank() != 3) throw ShapeError("write_f64 expects a [C,H,W] tensor");
  std::string out;
  auto put = [&out](std::uint64_t v, std::size_t bytes) {
    for (std::size_t i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  };
  for (std::size_t a = 0; a < 3; ++a) put(image.dim(a), 4);
  for (double v : image.data()) put(std::bit_cast<std::uint64_t>(v), 8);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write image: " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

Tensor crop(const Tensor& image, const BBox& box) {
  const auto h = static_cast<std::int64_t>(image.dim(1));
  const auto w = static_cast<std::int64_t>(image.dim(2));
  if (box.x < 0 || box.y < 0 || box.w <= 0 || box.h <= 0 || box.x + box.w > w || box.y + box.h > h) {
    throw DomainError("bbox (" + std::to_string(box.x) + "," + std::to_string(box.y) + "," +
                      std::to_string(box.w) + "," + std::to_string(box.h) + ") outside " +
                      std::to_string(w) + "x" + std::to_string(h) + " image");
  }
  const std::size_t c = image.dim(0);
  Tensor out({c, static_cast<std::size_t>(box.h), static_cast<std::size_t>(box.w)});
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::int64_t y = 0; y < box.h; ++y) {
      for (std::int64_t x = 0; x < box.w; ++x) {
        out.at(ch, y, x) = image.at(ch, box.y + y, box.x + x);
      }
    }
  }
  return out;
}

Tensor resize_bilinear(const Tensor& image, std::size_t height, std::size_t width) {
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (h == height && w == width) return image;
  Tensor out({c, height, width});
  const double sy = static_cast<double>(h) / static_cast<double>(height);
  const double sx = static_cast<double>(w) / static_cast<double>(width);
  for (std::size_t y = 0; y < height; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(h - 1));
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, h - 1);
    const double ty = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < width; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(w - 1));
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, w - 1);
      const double tx = fx - static_cast<double>(x0);
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double top = image.at(ch, y0, x0) * (1 - tx) + image.at(ch, y0, x1) * tx;
        const double bot = image.at(ch, y1, x0) * (1 - tx) + image.at(ch, y1, x1) * tx;
        out.at(ch, y, x) = top * (1 - ty) + bot * ty;
      }
    }
  }
  return out;
}

Tensor convert_channels(const Tensor& image, std::size_t channels) {
  const std::size_t c = image.dim(0);
  if (c == channels) return image;
  const std::size_t h = image.dim(1), w = image.dim(2);
  Tensor out({channels, h, w});
  if (channels == 1) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        double s = 0.0;
        for (std::size_t ch = 0; ch < c; ++ch) s += image.at(ch, y, x);
        out.at(0, y, x) = s / static_cast<double>(c);
      }
    }
  } else if (c == 1) {
    for (std::size_t ch = 0; ch < channels; ++ch) {
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) out.at(ch, y, x) = image.at(0, y, x);
      }
    }
  } else {
    throw ShapeError("cannot convert " + std::to_string(c) + " channels to " + std::to_string(channels));
  }
  return out;
}

}  // namespace dgnet
