#include "dgnet/ops.hpp"

#include <algorithm>
#include <cmath>

#include "dgnet/error.hpp"

namespace dgnet::ops {

namespace {

struct ConvGeometry {
  std::size_t c_in, h, w, c_out, kh, kw, out_h, out_w;
};

ConvGeometry conv_geometry(const Tensor& input, const Tensor& kernels, std::size_t stride,
                           std::size_t pad) {
  if (input.rank() != 3) throw ShapeError("conv2d input must be [C,H,W], got " + shape_string(input.shape()));
  if (kernels.rank() != 4) throw ShapeError("conv2d kernels must be [Cout,Cin,kH,kW]");
  if (stride == 0) throw ShapeError("conv2d stride must be positive");
  ConvGeometry g{input.dim(0), input.dim(1), input.dim(2), kernels.dim(0), kernels.dim(2), kernels.dim(3), 0, 0};
  if (kernels.dim(1) != g.c_in) {
    throw ShapeError("conv2d channel mismatch: input has " + std::to_string(g.c_in) +
                     ", kernels expect " + std::to_string(kernels.dim(1)));
  }
  if (g.kh > g.h + 2 * pad || g.kw > g.w + 2 * pad) {
    throw ShapeError("conv2d kernel larger than padded input");
  }
  g.out_h = (g.h + 2 * pad - g.kh) / stride + 1;
  g.out_w = (g.w + 2 * pad - g.kw) / stride + 1;
  return g;
}

// Output columns [lo, hi) whose tap at kernel column k lands inside the input.
std::pair<std::size_t, std::size_t> valid_range(std::size_t out_extent, std::size_t in_extent,
                                                std::size_t k, std::size_t stride,
                                                std::size_t pad) {
  // in = o*stride + k - pad must satisfy 0 <= in < in_extent
  std::size_t lo = 0;
  if (k < pad) lo = (pad - k + stride - 1) / stride;
  std::size_t hi = 0;
  if (in_extent + pad > k) hi = std::min(out_extent, (in_extent + pad - k - 1) / stride + 1);
  if (lo > hi) lo = hi;
  return {lo, hi};
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

}  // namespace

namespace {

// Unfolds input patches into a [C_in*kH*kW, out_h*out_w] matrix; padded taps are 0.
std::vector<double> im2col(const Tensor& input, const ConvGeometry& g, std::size_t stride, std::size_t pad) {
  const std::size_t cols = g.out_h * g.out_w;
  std::vector<double> m(g.c_in * g.kh * g.kw * cols, 0.0);
  const double* in = input.data().data();
  for (std::size_t ci = 0; ci < g.c_in; ++ci) {
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      const auto [oy0, oy1] = valid_range(g.out_h, g.h, ky, stride, pad);
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        const auto [ox0, ox1] = valid_range(g.out_w, g.w, kx, stride, pad);
        double* row = m.data() + ((ci * g.kh + ky) * g.kw + kx) * cols;
        for (std::size_t oy = oy0; oy < oy1; ++oy) {
          const double* irow = in + (ci * g.h + oy * stride + ky - pad) * g.w;
          double* mrow = row + oy * g.out_w;
          for (std::size_t ox = ox0; ox < ox1; ++ox) mrow[ox] = irow[ox * stride + kx - pad];
        }
      }
    }
  }
  return m;
}

void col2im_add(const std::vector<double>& m, const ConvGeometry& g, std::size_t stride, std::size_t pad,
                Tensor& input_grad) {
  const std::size_t cols = g.out_h * g.out_w;
  double* gin = input_grad.data().data();
  for (std::size_t ci = 0; ci < g.c_in; ++ci) {
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      const auto [oy0, oy1] = valid_range(g.out_h, g.h, ky, stride, pad);
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        const auto [ox0, ox1] = valid_range(g.out_w, g.w, kx, stride, pad);
        const double* row = m.data() + ((ci * g.kh + ky) * g.kw + kx) * cols;
        for (std::size_t oy = oy0; oy < oy1; ++oy) {
          double* grow = gin + (ci * g.h + oy * stride + ky - pad) * g.w;
          const double* mrow = row + oy * g.out_w;
          for (std::size_t ox = ox0; ox < ox1; ++ox) grow[ox * stride + kx - pad] += mrow[ox];
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias, std::size_t stride,
              std::size_t pad) {
  const auto g = conv_geometry(input, kernels, stride, pad);
  if (bias.size() != g.c_out) throw ShapeError("conv2d bias length must equal output channels");

  const std::size_t cols = g.out_h * g.out_w;
  const std::size_t taps = g.c_in * g.kh * g.kw;
  const std::vector<double> m = im2col(input, g, stride, pad);
  Tensor out({g.c_out, g.out_h, g.out_w});
  const double* ker = kernels.data().data();
  double* o = out.data().data();
  for (std::size_t co = 0; co < g.c_out; ++co) {
    double* orow = o + co * cols;
    std::fill(orow, orow + cols, bias[co]);
    for (std::size_t t = 0; t < taps; ++t) {
      const double wv = ker[co * taps + t];
      const double* mrow = m.data() + t * cols;
      for (std::size_t j = 0; j < cols; ++j) orow[j] += wv * mrow[j];
    }
  }
  return out;
}

Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& kernels, const Tensor& out_grad,
                            std::size_t stride, std::size_t pad, bool input_grad) {
  const auto g = conv_geometry(input, kernels, stride, pad);
  if (out_grad.shape() != Shape{g.c_out, g.out_h, g.out_w}) {
    throw ShapeError("conv2d_backward: output gradient shape mismatch");
  }
  const std::size_t cols = g.out_h * g.out_w;
  const std::size_t taps = g.c_in * g.kh * g.kw;
  Conv2dGrads grads{Tensor(input.shape()), Tensor(kernels.shape()), Tensor({g.c_out})};
  const std::vector<double> m = im2col(input, g, stride, pad);
  const double* og = out_grad.data().data();
  const double* ker = kernels.data().data();
  double* gker = grads.kernels.data().data();

  for (std::size_t co = 0; co < g.c_out; ++co) {
    const double* grow = og + co * cols;
    double bsum = 0.0;
    for (std::size_t j = 0; j < cols; ++j) bsum += grow[j];
    grads.bias[co] = bsum;
    for (std::size_t t = 0; t < taps; ++t) {
      const double* mrow = m.data() + t * cols;
      double acc = 0.0;
      for (std::size_t j = 0; j < cols; ++j) acc += grow[j] * mrow[j];
      gker[co * taps + t] = acc;
    }
  }
  if (input_grad) {
    std::vector<double> dm(taps * cols, 0.0);
    for (std::size_t co = 0; co < g.c_out; ++co) {
      const double* grow = og + co * cols;
      for (std::size_t t = 0; t < taps; ++t) {
        const double wv = ker[co * taps + t];
        double* drow = dm.data() + t * cols;
        for (std::size_t j = 0; j < cols; ++j) drow[j] += wv * grow[j];
      }
    }
    col2im_add(dm, g, stride, pad, grads.input);
  }
  return grads;
}

Tensor relu(const Tensor& input) {
  Tensor out = input;
  for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& out_grad) {
  require_same_shape(input, out_grad, "relu_backward");
  Tensor g = out_grad;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(input[i] > 0.0)) g[i] = 0.0;
  }
  return g;
}

Tensor maxpool2(const Tensor& input) {
  if (input.rank() != 3) throw ShapeError("maxpool2 input must be [C,H,W]");
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  if (h % 2 != 0 || w % 2 != 0) {
    throw ShapeError("maxpool2 requires even spatial extents, got " + shape_string(input.shape()));
  }
  Tensor out({c, h / 2, w / 2});
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < h / 2; ++y) {
      for (std::size_t x = 0; x < w / 2; ++x) {
        out.at(ch, y, x) = std::max({input.at(ch, 2 * y, 2 * x), input.at(ch, 2 * y, 2 * x + 1),
                                     input.at(ch, 2 * y + 1, 2 * x), input.at(ch, 2 * y + 1, 2 * x + 1)});
      }
    }
  }
  return out;
}

Tensor maxpool2_backward(const Tensor& input, const Tensor& out_grad) {
  if (input.rank() != 3 || input.dim(1) % 2 != 0 || input.dim(2) % 2 != 0) {
    throw ShapeError("maxpool2_backward: invalid input shape");
  }
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  if (out_grad.shape() != Shape{c, h / 2, w / 2}) {
    throw ShapeError("maxpool2_backward: output gradient shape mismatch");
  }
  Tensor g(input.shape());
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < h / 2; ++y) {
      for (std::size_t x = 0; x < w / 2; ++x) {
        // Gradient routes to the first maximal element in row-major window order.
        std::size_t by = 2 * y, bx = 2 * x;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            if (input.at(ch, 2 * y + dy, 2 * x + dx) > input.at(ch, by, bx)) {
              by = 2 * y + dy;
              bx = 2 * x + dx;
            }
          }
        }
        g.at(ch, by, bx) += out_grad.at(ch, y, x);
      }
    }
  }
  return g;
}

Tensor linear(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  if (weights.rank() != 2) throw ShapeError("linear weights must be [out,in]");
  const std::size_t n_out = weights.dim(0), n_in = weights.dim(1);
  if (input.size() != n_in) {
    throw ShapeError("linear expects " + std::to_string(n_in) + " inputs, got " +
                     std::to_string(input.size()));
  }
  if (bias.size() != n_out) throw ShapeError("linear bias length must equal output width");
  Tensor out({n_out});
  const double* x = input.data().data();
  for (std::size_t r = 0; r < n_out; ++r) {
    const double* row = weights.data().data() + r * n_in;
    double acc = bias[r];
    for (std::size_t k = 0; k < n_in; ++k) acc += row[k] * x[k];
    out[r] = acc;
  }
  return out;
}

LinearGrads linear_backward(const Tensor& input, const Tensor& weights, const Tensor& out_grad) {
  const std::size_t n_out = weights.dim(0), n_in = weights.dim(1);
  if (input.size() != n_in || out_grad.size() != n_out) {
    throw ShapeError("linear_backward: shape mismatch");
  }
  LinearGrads grads{Tensor(input.shape()), Tensor(weights.shape()), Tensor({n_out})};
  const double* x = input.data().data();
  double* gx = grads.input.data().data();
  for (std::size_t r = 0; r < n_out; ++r) {
    const double go = out_grad[r];
    grads.bias[r] = go;
    if (go == 0.0) continue;
    const double* row = weights.data().data() + r * n_in;
    double* grow = grads.weights.data().data() + r * n_in;
    for (std::size_t k = 0; k < n_in; ++k) {
      grow[k] = go * x[k];
      gx[k] += go * row[k];
    }
  }
  return grads;
}

Tensor sigmoid(const Tensor& input) {
  Tensor out = input;
  for (auto& v : out.data()) {
    // Split on sign so exp never overflows.
    if (v >= 0.0) {
      v = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      v = e / (1.0 + e);
    }
  }
  return out;
}

Tensor sigmoid_backward(const Tensor& output, const Tensor& out_grad) {
  require_same_shape(output, out_grad, "sigmoid_backward");
  Tensor g = out_grad;
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= output[i] * (1.0 - output[i]);
  return g;
}

}  // namespace dgnet::ops
