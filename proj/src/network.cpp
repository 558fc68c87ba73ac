#include "dgnet/network.hpp"

#include <cmath>
#include <utility>

#include "dgnet/error.hpp"
#include "dgnet/rng.hpp"

namespace dgnet {

NetworkSpec NetworkSpec::tiny() { return NetworkSpec{}; }

NetworkSpec NetworkSpec::vggface16(Shape input) {
  NetworkSpec s;
  s.profile = "vggface16";
  s.input = std::move(input);
  s.stages = {{64, 2}, {128, 2}, {256, 3}, {512, 3}, {512, 3}};
  s.fc = {4096, 4096};
  s.head = {1};
  return s;
}

std::size_t NetworkSpec::conv_layer_count() const {
  std::size_t n = 0;
  for (const auto& st : stages) n += st.convs;
  return n;
}

std::size_t NetworkSpec::weighted_layer_count() const {
  return conv_layer_count() + fc.size() + head.size();
}

void NetworkSpec::validate() const {
  if (profile != "tiny" && profile != "vggface16") {
    throw ConfigError("unknown network profile '" + profile + "'");
  }
  if (input.size() != 3 || input[0] == 0 || input[1] == 0 || input[2] == 0) {
    throw ConfigError("input shape must be (channels, H, W) with positive extents");
  }
  if (stages.empty()) throw ConfigError("conv stage list must not be empty");
  std::size_t h = input[1], w = input[2];
  for (const auto& st : stages) {
    if (st.out_channels == 0 || st.convs == 0) throw ConfigError("conv stages need channels and at least one conv");
    if (h % 2 != 0 || w % 2 != 0) {
      throw ConfigError("input " + shape_string(input) + " does not halve evenly through every stage");
    }
    h /= 2;
    w /= 2;
  }
  if (fc.size() != 2) throw ConfigError("fc widths must be [fc1, fc2]");
  if (fc[0] == 0) throw ConfigError("fc1 width must be positive");
  if (fc[1] < 2) throw ConfigError("fc2 width must be at least 2");
  if (head.empty() || head.back() != 1) throw ConfigError("head must end in a single unit");
  for (auto hw : head) {
    if (hw == 0) throw ConfigError("head widths must be positive");
  }
  if (profile == "vggface16" && (conv_layer_count() != 13 || head.size() != 1)) {
    throw ConfigError("vggface16 profile requires 13 conv layers and 3 fc layers");
  }
}

nlohmann::json NetworkSpec::to_json() const {
  nlohmann::json st = nlohmann::json::array();
  for (const auto& s : stages) st.push_back({s.out_channels, s.convs});
  return {{"profile", profile}, {"input", input}, {"stages", st}, {"fc", fc}, {"head", head}};
}

NetworkSpec NetworkSpec::from_json(const nlohmann::json& j) {
  try {
    NetworkSpec s;
    s.profile = j.at("profile").get<std::string>();
    s.input = j.at("input").get<Shape>();
    s.stages.clear();
    for (const auto& e : j.at("stages")) {
      s.stages.push_back({e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>()});
    }
    s.fc = j.at("fc").get<std::vector<std::size_t>>();
    s.head = j.at("head").get<std::vector<std::size_t>>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed network spec: ") + e.what());
  }
}

std::uint64_t NetworkSpec::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : to_json().dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<LayerInfo> layer_layout(const NetworkSpec& spec) {
  spec.validate();
  std::vector<LayerInfo> layers;
  std::size_t channels = spec.input[0], h = spec.input[1], w = spec.input[2];
  for (std::size_t s = 0; s < spec.stages.size(); ++s) {
    const auto& st = spec.stages[s];
    for (std::size_t c = 0; c < st.convs; ++c) {
      layers.push_back({"conv" + std::to_string(s + 1) + "_" + std::to_string(c + 1), LayerKind::conv,
                        {st.out_channels, channels, 3, 3}, channels * 9});
      channels = st.out_channels;
    }
    h /= 2;
    w /= 2;
  }
  std::size_t width = channels * h * w;
  for (std::size_t i = 0; i < spec.fc.size(); ++i) {
    layers.push_back({"fc" + std::to_string(i + 1), LayerKind::fc, {spec.fc[i], width}, width});
    width = spec.fc[i];
  }
  for (std::size_t i = 0; i < spec.head.size(); ++i) {
    layers.push_back({"head" + std::to_string(i + 1), LayerKind::head, {spec.head[i], width}, width});
    width = spec.head[i];
  }
  return layers;
}

std::size_t parameter_count(const NetworkSpec& spec) {
  std::size_t n = 0;
  for (const auto& l : layer_layout(spec)) n += shape_size(l.weight_shape) + l.weight_shape[0];
  return n;
}

std::size_t NetworkParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.size();
  return n;
}

std::size_t NetworkParams::frozen_tensor_count() const {
  std::size_t n = 0;
  for (bool f : frozen) n += f ? 1 : 0;
  return n;
}

NetworkParams build_network(const NetworkSpec& spec, std::uint64_t seed) {
  const auto layers = layer_layout(spec);
  NetworkParams params;
  params.spec = spec;
  params.seed = seed;
  Rng rng(seed);
  for (const auto& l : layers) {
    Tensor weight(l.weight_shape);
    const double limit = std::sqrt(6.0 / static_cast<double>(l.fan_in));
    for (auto& v : weight.data()) v = rng.uniform(-limit, limit);
    params.names.push_back(l.name + ".weight");
    params.tensors.push_back(std::move(weight));
    params.names.push_back(l.name + ".bias");
    params.tensors.emplace_back(Shape{l.weight_shape[0]});
  }
  params.frozen.assign(params.tensors.size(), false);
  return params;
}

NetworkParams freeze_prefix(NetworkParams params, std::size_t k) {
  const std::size_t convs = params.spec.conv_layer_count();
  if (k > convs) {
    throw ConfigError("cannot freeze " + std::to_string(k) + " conv layers; network has " +
                      std::to_string(convs));
  }
  params.frozen.assign(params.tensors.size(), false);
  for (std::size_t i = 0; i < 2 * k; ++i) params.frozen[i] = true;
  return params;
}

std::size_t default_freeze_k(const NetworkSpec& spec) { return spec.profile == "vggface16" ? 4 : 1; }

BoundParams bind_params(Graph& graph, const NetworkParams& params) {
  BoundParams bound;
  bound.ids.reserve(params.tensors.size());
  for (const auto& t : params.tensors) bound.ids.push_back(graph.leaf(t));
  return bound;
}

StreamTrace embed(Graph& graph, const NetworkSpec& spec, const BoundParams& bound, NodeId image) {
  if (graph.value(image).shape() != spec.input) {
    throw ShapeError("image shape " + shape_string(graph.value(image).shape()) +
                     " does not match network input " + shape_string(spec.input));
  }
  StreamTrace trace;
  std::size_t layer = 0;
  NodeId x = image;
  auto record = [&](NodeId id) {
    trace.activations.push_back(id);
    return id;
  };
  for (const auto& st : spec.stages) {
    for (std::size_t c = 0; c < st.convs; ++c, ++layer) {
      x = record(graph.conv2d(x, bound.ids[2 * layer], bound.ids[2 * layer + 1], 1, 1));
      x = record(graph.relu(x));
    }
    x = record(graph.maxpool2(x));
  }
  x = record(graph.flatten(x));
  for (std::size_t i = 0; i < spec.fc.size(); ++i, ++layer) {
    x = record(graph.linear(x, bound.ids[2 * layer], bound.ids[2 * layer + 1]));
    x = record(graph.relu(x));
  }
  trace.embedding = x;
  return trace;
}

NodeId head_forward(Graph& graph, const NetworkSpec& spec, const BoundParams& bound, NodeId emb_a,
                    NodeId emb_b) {
  std::size_t layer = spec.conv_layer_count() + spec.fc.size();
  NodeId x = graph.abs_diff(emb_a, emb_b);
  for (std::size_t i = 0; i < spec.head.size(); ++i, ++layer) {
    x = graph.linear(x, bound.ids[2 * layer], bound.ids[2 * layer + 1]);
    x = i + 1 < spec.head.size() ? graph.relu(x) : graph.sigmoid(x);
  }
  return x;
}

SiameseOutput siamese_forward(const NetworkParams& params, const Tensor& x_a, const Tensor& x_b) {
  Graph graph;
  const auto bound = bind_params(graph, params);
  const auto a = embed(graph, params.spec, bound, graph.leaf(x_a));
  const auto b = embed(graph, params.spec, bound, graph.leaf(x_b));
  const NodeId p = head_forward(graph, params.spec, bound, a.embedding, b.embedding);
  return {graph.value(a.embedding), graph.value(b.embedding), graph.value(p)[0]};
}

Tensor embedding(const NetworkParams& params, const Tensor& x) {
  Graph graph;
  const auto bound = bind_params(graph, params);
  return graph.value(embed(graph, params.spec, bound, graph.leaf(x)).embedding);
}

}  // namespace dgnet
