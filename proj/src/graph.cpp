#include "dgnet/graph.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "dgnet/error.hpp"
#include "dgnet/ops.hpp"

namespace dgnet {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

constexpr double kNormFloor = 1e-12;

}  // namespace

NodeId Graph::push(Tensor value, std::vector<NodeId> inputs, BackwardFn backward) {
  for (auto in : inputs) {
    if (in.index >= nodes_.size()) throw StateError("graph input refers to an unrecorded node");
  }
  bool needs = false;
  for (auto in : inputs) needs = needs || nodes_[in.index].requires_grad;
  nodes_.push_back(Node{std::move(value), Tensor{}, std::move(inputs), std::move(backward), needs});
  has_gradients_ = false;
  return NodeId{nodes_.size() - 1};
}

const Graph::Node& Graph::node(NodeId id) const {
  if (id.index >= nodes_.size()) {
    throw StateError("node " + std::to_string(id.index) + " is not recorded in this graph");
  }
  return nodes_[id.index];
}

NodeId Graph::leaf(Tensor value) {
  const NodeId id = push(std::move(value), {}, nullptr);
  nodes_.back().requires_grad = true;
  return id;
}

NodeId Graph::constant(Tensor value) { return push(std::move(value), {}, nullptr); }

NodeId Graph::conv2d(NodeId input, NodeId kernels, NodeId bias, std::size_t stride,
                     std::size_t pad) {
  Tensor out = ops::conv2d(value(input), value(kernels), value(bias), stride, pad);
  const bool input_grad = requires_grad(input);
  return push(std::move(out), {input, kernels, bias},
              [stride, pad, input_grad](const Tensor& g, std::span<const Tensor* const> in, const Tensor&) {
                auto r = ops::conv2d_backward(*in[0], *in[1], g, stride, pad, input_grad);
                return std::vector<Tensor>{std::move(r.input), std::move(r.kernels), std::move(r.bias)};
              });
}

NodeId Graph::relu(NodeId input) {
  for (double v : value(input).data()) fold(v > 0.0 ? 1 : 0);
  return push(ops::relu(value(input)), {input},
              [](const Tensor& g, std::span<const Tensor* const> in, const Tensor&) {
                return std::vector<Tensor>{ops::relu_backward(*in[0], g)};
              });
}

NodeId Graph::maxpool2(NodeId input) {
  const Tensor& x = value(input);
  if (x.rank() == 3 && x.dim(1) % 2 == 0 && x.dim(2) % 2 == 0) {
    const std::size_t h = x.dim(1), w = x.dim(2);
    for (std::size_t c = 0; c < x.dim(0); ++c)
      for (std::size_t i = 0; i < h; i += 2)
        for (std::size_t j = 0; j < w; j += 2) {
          const double* row0 = x.data().data() + (c * h + i) * w + j;
          const double* row1 = row0 + w;
          const double cand[4] = {row0[0], row0[1], row1[0], row1[1]};
          std::uint64_t best = 0;
          for (std::uint64_t k = 1; k < 4; ++k) best = cand[k] > cand[best] ? k : best;
          fold(best);
        }
  }
  return push(ops::maxpool2(value(input)), {input},
              [](const Tensor& g, std::span<const Tensor* const> in, const Tensor&) {
                return std::vector<Tensor>{ops::maxpool2_backward(*in[0], g)};
              });
}

NodeId Graph::linear(NodeId input, NodeId weights, NodeId bias) {
  return push(ops::linear(value(input), value(weights), value(bias)), {input, weights, bias},
              [](const Tensor& g, std::span<const Tensor* const> in, const Tensor&) {
                auto r = ops::linear_backward(*in[0], *in[1], g);
                return std::vector<Tensor>{std::move(r.input), std::move(r.weights), std::move(r.bias)};
              });
}

NodeId Graph::sigmoid(NodeId input) {
  return push(ops::sigmoid(value(input)), {input},
              [](const Tensor& g, std::span<const Tensor* const>, const Tensor& out) {
                return std::vector<Tensor>{ops::sigmoid_backward(out, g)};
              });
}

NodeId Graph::flatten(NodeId input) {
  const Tensor& v = value(input);
  return push(v.reshaped({v.size()}), {input},
              [](const Tensor& g, std::span<const Tensor* const> in, const Tensor&) {
                return std::vector<Tensor>{g.reshaped(in[0]->shape())};
              });
}

NodeId Graph::abs_diff(NodeId a, NodeId b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  if (va.shape() != vb.shape()) throw ShapeError("abs_diff operands differ in shape");
  Tensor out(va.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::abs(va[i] - vb[i]);
    fold(va[i] > vb[i] ? 2 : (va[i] < vb[i] ? 0 : 1));
  }
  return push(std::move(out), {a, b},
              [](const Tensor& g, std::span<const Tensor* const> in, const Tensor&) {
                Tensor ga(g.shape()), gb(g.shape());
                for (std::size_t i = 0; i < g.size(); ++i) {
                  const double diff = (*in[0])[i] - (*in[1])[i];
                  // Subgradient 0 at a tie.
                  const double sgn = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
                  ga[i] = sgn * g[i];
                  gb[i] = -sgn * g[i];
                }
                return std::vector<Tensor>{std::move(ga), std::move(gb)};
              });
}

NodeId Graph::mul(NodeId a, NodeId b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  if (va.shape() != vb.shape()) throw ShapeError("mul operands differ in shape");
  Tensor out(va.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] * vb[i];
  return push(std::move(out), {a, b},
              [](const Tensor& g, std::span<const Tensor* const> in, const Tensor&) {
                Tensor ga(g.shape()), gb(g.shape());
                for (std::size_t i = 0; i < g.size(); ++i) {
                  ga[i] = g[i] * (*in[1])[i];
                  gb[i] = g[i] * (*in[0])[i];
                }
                return std::vector<Tensor>{std::move(ga), std::move(gb)};
              });
}

NodeId Graph::cosine_distance(NodeId a, NodeId b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  if (va.size() != vb.size()) throw ShapeError("cosine_distance operands differ in length");
  const double aa = dot(va.data(), va.data());
  const double bb = dot(vb.data(), vb.data());
  const double na = std::sqrt(aa), nb = std::sqrt(bb);
  double sim = 0.0;
  if (na >= kNormFloor && nb >= kNormFloor) sim = std::min(1.0, dot(va.data(), vb.data()) / std::sqrt(aa * bb));
  return push(Tensor::scalar(1.0 - sim), {a, b},
              [na, nb](const Tensor& g, std::span<const Tensor* const> in, const Tensor& out) {
                const Tensor& x = *in[0];
                const Tensor& y = *in[1];
                Tensor gx(x.shape()), gy(y.shape());
                if (na >= kNormFloor && nb >= kNormFloor) {
                  const double s = 1.0 - out[0];
                  const double scale = -g[0];  // d(distance)/d(sim) = -1
                  for (std::size_t i = 0; i < x.size(); ++i) {
                    gx[i] = scale * (y[i] / (na * nb) - s * x[i] / (na * na));
                    gy[i] = scale * (x[i] / (na * nb) - s * y[i] / (nb * nb));
                  }
                }
                return std::vector<Tensor>{std::move(gx), std::move(gy)};
              });
}

NodeId Graph::concat(std::span<const NodeId> inputs) {
  std::vector<double> joined;
  for (auto id : inputs) {
    const auto d = value(id).data();
    joined.insert(joined.end(), d.begin(), d.end());
  }
  return push(Tensor::vector(std::move(joined)), {inputs.begin(), inputs.end()},
              [](const Tensor& g, std::span<const Tensor* const> in, const Tensor&) {
                std::vector<Tensor> grads;
                std::size_t offset = 0;
                for (const Tensor* t : in) {
                  Tensor part(t->shape());
                  for (std::size_t i = 0; i < part.size(); ++i) part[i] = g[offset + i];
                  offset += part.size();
                  grads.push_back(std::move(part));
                }
                return grads;
              });
}

NodeId Graph::custom(std::vector<NodeId> inputs, Tensor output, BackwardFn backward) {
  return push(std::move(output), std::move(inputs), std::move(backward));
}

const Tensor& Graph::value(NodeId id) const { return node(id).value; }

const Tensor& Graph::grad(NodeId id) const {
  const Node& n = node(id);
  if (!has_gradients_) throw StateError("grad() requested before backward()");
  return n.grad;
}

void Graph::backward(NodeId loss) {
  if (nodes_.empty()) throw StateError("backward() called before any forward pass was recorded");
  if (value(loss).size() != 1) throw ShapeError("backward(loss) requires a scalar output");
  backward(loss, Tensor(value(loss).shape(), 1.0));
}

void Graph::backward(NodeId output, const Tensor& seed) {
  if (nodes_.empty()) throw StateError("backward() called before any forward pass was recorded");
  if (seed.shape() != value(output).shape()) throw ShapeError("backward seed shape mismatch");

  for (auto& n : nodes_) n.grad = Tensor(n.value.shape());
  nodes_[output.index].grad = seed;

  std::vector<const Tensor*> in_values;
  for (std::size_t idx = output.index + 1; idx-- > 0;) {
    Node& n = nodes_[idx];
    if (!n.backward || !n.requires_grad) continue;
    in_values.clear();
    for (auto in : n.inputs) in_values.push_back(&nodes_[in.index].value);
    std::vector<Tensor> in_grads = n.backward(n.grad, in_values, n.value);
    for (std::size_t k = 0; k < n.inputs.size(); ++k) {
      if (k >= in_grads.size() || in_grads[k].empty()) continue;
      if (!nodes_[n.inputs[k].index].requires_grad) continue;
      Tensor& dst = nodes_[n.inputs[k].index].grad;
      const Tensor& src = in_grads[k];
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
  }
  has_gradients_ = true;
}

}  // namespace dgnet
