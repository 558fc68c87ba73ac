#pragma once

#include "dgnet/tensor.hpp"

// Forward and backward kernels for the layer vocabulary of a VGG-style
// network. Convolution uses the cross-correlation convention: the kernel is
// not flipped. Image tensors are laid out [C, H, W].
namespace dgnet::ops {

struct Conv2dGrads {
  Tensor input;
  Tensor kernels;
  Tensor bias;
};

struct LinearGrads {
  Tensor input;
  Tensor weights;
  Tensor bias;
};

Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias,
              std::size_t stride = 1, std::size_t pad = 0);
Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& kernels,
                            const Tensor& out_grad, std::size_t stride, std::size_t pad,
                            bool input_grad = true);

Tensor relu(const Tensor& input);
Tensor relu_backward(const Tensor& input, const Tensor& out_grad);

/// 2x2 window, stride 2. Odd spatial extents are rejected.
Tensor maxpool2(const Tensor& input);
Tensor maxpool2_backward(const Tensor& input, const Tensor& out_grad);

/// weights [out, in] times the flattened input, plus bias [out].
Tensor linear(const Tensor& input, const Tensor& weights, const Tensor& bias);
LinearGrads linear_backward(const Tensor& input, const Tensor& weights, const Tensor& out_grad);

Tensor sigmoid(const Tensor& input);
Tensor sigmoid_backward(const Tensor& output, const Tensor& out_grad);

}  // namespace dgnet::ops
