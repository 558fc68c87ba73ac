#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "dgnet/tensor.hpp"

namespace dgnet {

struct NodeId {
  std::size_t index = 0;
  friend bool operator==(NodeId, NodeId) = default;
};

/// Tape of primitive applications recorded during one forward pass.
///
/// Nodes are appended in evaluation order, so every input precedes its
/// consumer and backward() simply walks the tape in reverse. Leaves created
/// with leaf() may be shared by several consumers (tied weights); their
/// gradients accumulate.
class Graph {
 public:
  /// Receives the node's output gradient and the input values; returns one
  /// gradient per input (an empty Tensor means "no contribution").
  using BackwardFn = std::function<std::vector<Tensor>(const Tensor& out_grad,
                                                       std::span<const Tensor* const> inputs,
                                                       const Tensor& output)>;

  NodeId leaf(Tensor value);
  /// Leaf that never receives a gradient (input images).
  NodeId constant(Tensor value);

  NodeId conv2d(NodeId input, NodeId kernels, NodeId bias, std::size_t stride, std::size_t pad);
  NodeId relu(NodeId input);
  NodeId maxpool2(NodeId input);
  NodeId linear(NodeId input, NodeId weights, NodeId bias);
  NodeId sigmoid(NodeId input);
  NodeId flatten(NodeId input);
  NodeId abs_diff(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  /// 1 - cosine similarity as a [1] tensor; zero-norm operands give distance 1.
  NodeId cosine_distance(NodeId a, NodeId b);
  /// Concatenate flat views of the inputs into one vector.
  NodeId concat(std::span<const NodeId> inputs);

  NodeId custom(std::vector<NodeId> inputs, Tensor output, BackwardFn backward);

  const Tensor& value(NodeId id) const;
  /// Gradient accumulated by the last backward(); zero-filled if the node was
  /// not reached.
  const Tensor& grad(NodeId id) const;

  std::size_t size() const { return nodes_.size(); }
  /// Hash of every branch taken so far by the non-smooth primitives: ReLU
  /// input signs, max-pool winners and |a-b| signs. Two forward passes with
  /// equal signatures lie on the same smooth piece of the function.
  std::uint64_t branch_signature() const { return branch_hash_; }
  bool requires_grad(NodeId id) const { return node(id).requires_grad; }

  /// Seeds the scalar node `loss` with 1 and propagates in reverse order.
  void backward(NodeId loss);
  void backward(NodeId output, const Tensor& seed);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<NodeId> inputs;
    BackwardFn backward;
    bool requires_grad = true;
  };

  NodeId push(Tensor value, std::vector<NodeId> inputs, BackwardFn backward);
  const Node& node(NodeId id) const;

  void fold(std::uint64_t v) { branch_hash_ = (branch_hash_ ^ v) * 0x100000001b3ULL; }

  std::vector<Node> nodes_;
  bool has_gradients_ = false;
  std::uint64_t branch_hash_ = 0xcbf29ce484222325ULL;
};

}  // namespace dgnet
