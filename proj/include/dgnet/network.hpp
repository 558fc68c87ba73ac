#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "dgnet/graph.hpp"
#include "dgnet/tensor.hpp"

namespace dgnet {

struct ConvStage {
  std::size_t out_channels = 0;
  std::size_t convs = 0;  // 3x3 convolutions before the stage's maxpool2
  friend bool operator==(const ConvStage&, const ConvStage&) = default;
};

/// Topology of the Siamese trunk and verification head.
///
/// Each stage runs `convs` 3x3/pad-1 convolutions with ReLU, then maxpool2.
/// The trunk continues with fc1 -> ReLU -> fc2 -> ReLU; the fc2 activation is
/// the embedding. The head consumes |embA - embB| through `head` widths with
/// ReLU between layers and a sigmoid on the last, which must have width 1.
struct NetworkSpec {
  std::string profile = "tiny";
  Shape input{1, 32, 32};
  std::vector<ConvStage> stages{{8, 2}, {16, 2}};
  std::vector<std::size_t> fc{64, 32};
  std::vector<std::size_t> head{16, 1};

  static NetworkSpec tiny();
  /// Thirteen 3x3 convolutions, fc6/fc7 and a one-unit head: 16 weighted layers.
  static NetworkSpec vggface16(Shape input = {3, 224, 224});

  void validate() const;
  std::size_t conv_layer_count() const;
  std::size_t weighted_layer_count() const;
  std::size_t embedding_dim() const { return fc.at(1); }

  nlohmann::json to_json() const;
  static NetworkSpec from_json(const nlohmann::json& j);
  /// FNV-1a over the canonical JSON dump.
  std::uint64_t fingerprint() const;

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

enum class LayerKind { conv, fc, head };

struct LayerInfo {
  std::string name;
  LayerKind kind;
  Shape weight_shape;
  std::size_t fan_in;
};

/// Weighted layers in declaration order. Parameter tensor 2*i is layer i's
/// weight, 2*i+1 its bias.
std::vector<LayerInfo> layer_layout(const NetworkSpec& spec);
std::size_t parameter_count(const NetworkSpec& spec);

struct NetworkParams {
  NetworkSpec spec;
  std::vector<std::string> names;
  std::vector<Tensor> tensors;
  std::vector<bool> frozen;
  std::uint64_t seed = 0;

  std::size_t parameter_count() const;
  std::size_t frozen_tensor_count() const;
  friend bool operator==(const NetworkParams&, const NetworkParams&) = default;
};

/// He-uniform weights drawn from `seed`, zero biases, nothing frozen.
NetworkParams build_network(const NetworkSpec& spec, std::uint64_t seed);

/// Marks the weights and biases of the first k conv layers frozen and clears
/// every other flag.
NetworkParams freeze_prefix(NetworkParams params, std::size_t k);
std::size_t default_freeze_k(const NetworkSpec& spec);

/// Parameter leaves of one network bound into a graph. Both Siamese streams
/// consume the same leaves.
struct BoundParams {
  std::vector<NodeId> ids;
};

BoundParams bind_params(Graph& graph, const NetworkParams& params);

struct StreamTrace {
  std::vector<NodeId> activations;  // every layer output, input excluded
  NodeId embedding;
};

StreamTrace embed(Graph& graph, const NetworkSpec& spec, const BoundParams& bound, NodeId image);
/// Verification probability from two embeddings.
NodeId head_forward(Graph& graph, const NetworkSpec& spec, const BoundParams& bound, NodeId emb_a,
                    NodeId emb_b);

struct SiameseOutput {
  Tensor emb_a;
  Tensor emb_b;
  double p = 0.5;
};

SiameseOutput siamese_forward(const NetworkParams& params, const Tensor& x_a, const Tensor& x_b);
Tensor embedding(const NetworkParams& params, const Tensor& x);

void save_params(const NetworkParams& params, const std::filesystem::path& path);
/// Reads a checkpoint; the stored spec is used as-is.
NetworkParams load_params(const std::filesystem::path& path);
/// Reads a checkpoint and rejects it unless it was saved for `expected`.
NetworkParams load_params(const std::filesystem::path& path, const NetworkSpec& expected);

}  // namespace dgnet
