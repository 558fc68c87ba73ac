#include "dgnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <utility>

#include "dgnet/error.hpp"

namespace dgnet {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

namespace {

void check_extents(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one axis");
  for (auto e : shape) {
    if (e == 0) throw ShapeError("tensor extent must be positive: " + shape_string(shape));
  }
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  check_extents(shape_);
  data_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_extents(shape_);
  if (shape_size(shape_) != data_.size()) {
    throw ShapeError("data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_string(shape_));
  }
}

Tensor Tensor::scalar(double value) { return Tensor({1}, std::vector<double>{value}); }

Tensor Tensor::vector(std::vector<double> values) {
  Shape shape{values.size()};
  return Tensor(std::move(shape), std::move(values));
}

double& Tensor::at(std::size_t c, std::size_t h, std::size_t w) {
  return data_[(c * shape_[1] + h) * shape_[2] + w];
}

double Tensor::at(std::size_t c, std::size_t h, std::size_t w) const {
  return data_[(c * shape_[1] + h) * shape_[2] + w];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace dgnet
