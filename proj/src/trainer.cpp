#include "dgnet/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <thread>

#include "dgnet/error.hpp"
#include "dgnet/rng.hpp"

namespace dgnet {

namespace {

enum StreamTag : std::uint64_t { kShuffle = 1, kAugment = 2 };

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be a positive finite number");
  if (batch_size == 0) throw ConfigError("batch size must be at least 1");
  if (threads == 0) throw ConfigError("threads must be at least 1");
  loss.validate();
  augment.validate();
}

nlohmann::json TrainConfig::to_json() const {
  nlohmann::json j;
  j["lr"] = lr;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["freeze_k"] = freeze_k ? nlohmann::json(*freeze_k) : nlohmann::json(nullptr);
  j["margin"] = loss.margin;
  j["enable_lr"] = loss.enable_lr;
  j["enable_bce"] = loss.enable_bce;
  j["bce_clamp_eps"] = loss.bce_clamp_eps;
  j["class_balance"] = class_balance;
  j["seed"] = seed;
  j["checkpoint_every"] = checkpoint_every;
  j["threads"] = threads;
  j["augment"] = {{"gaussian_sigma", augment.gaussian_sigma},
                  {"flip_prob", augment.flip_prob},
                  {"max_rotation_deg", augment.max_rotation_deg},
                  {"max_translate_px", augment.max_translate_px},
                  {"seed", augment.seed}};
  return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j, TrainConfig base) {
  static const std::set<std::string> known{"lr", "epochs", "batch_size", "freeze_k", "margin", "enable_lr",
                                           "enable_bce", "bce_clamp_eps", "class_balance", "seed",
                                           "checkpoint_every", "threads", "augment"};
  static const std::set<std::string> known_aug{"gaussian_sigma", "flip_prob", "max_rotation_deg",
                                               "max_translate_px", "seed"};
  if (!j.is_object()) throw ConfigError("training config must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (!known.contains(key)) throw ConfigError("unknown training config key '" + key + "'");
      if (key == "lr") base.lr = value.get<double>();
      else if (key == "epochs") base.epochs = value.get<std::size_t>();
      else if (key == "batch_size") base.batch_size = value.get<std::size_t>();
      else if (key == "freeze_k") base.freeze_k = value.is_null() ? std::nullopt : std::optional(value.get<std::size_t>());
      else if (key == "margin") base.loss.margin = value.get<double>();
      else if (key == "enable_lr") base.loss.enable_lr = value.get<bool>();
      else if (key == "enable_bce") base.loss.enable_bce = value.get<bool>();
      else if (key == "bce_clamp_eps") base.loss.bce_clamp_eps = value.get<double>();
      else if (key == "class_balance") base.class_balance = value.get<bool>();
      else if (key == "seed") base.seed = value.get<std::uint64_t>();
      else if (key == "checkpoint_every") base.checkpoint_every = value.get<std::size_t>();
      else if (key == "threads") base.threads = value.get<std::size_t>();
      else if (key == "augment") {
        if (!value.is_object()) throw ConfigError("'augment' must be an object");
        for (const auto& [ak, av] : value.items()) {
          if (!known_aug.contains(ak)) throw ConfigError("unknown augment key '" + ak + "'");
          if (ak == "gaussian_sigma") base.augment.gaussian_sigma = av.get<double>();
          else if (ak == "flip_prob") base.augment.flip_prob = av.get<double>();
          else if (ak == "max_rotation_deg") base.augment.max_rotation_deg = av.get<double>();
          else if (ak == "max_translate_px") base.augment.max_translate_px = av.get<std::int64_t>();
          else base.augment.seed = av.get<std::uint64_t>();
        }
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad training config value: ") + e.what());
  }
  return base;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) { return from_json(j, TrainConfig{}); }

std::string TrainLog::csv() const {
  std::string out = "epoch,l_c,l_r,l_bce,l_total,train_acc,seconds\n";
  for (const auto& r : rows) {
    out += std::to_string(r.epoch) + "," + format_double(r.l_c) + "," + format_double(r.l_r) + "," +
           format_double(r.l_bce) + "," + format_double(r.l_total) + "," + format_double(r.train_acc) + "," +
           format_double(r.seconds) + "\n";
  }
  return out;
}

void TrainLog::write_csv(const std::filesystem::path& path) const {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write training log: " + path.string());
  f << csv();
}

EpochPlan make_batches(std::span<const PairRecord> pairs, std::size_t batch_size, std::uint64_t seed,
                       bool balance) {
  if (pairs.empty()) throw ConfigError("cannot batch an empty pair list");
  if (batch_size == 0) throw ConfigError("batch size must be at least 1");
  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

  EpochPlan plan;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    plan.batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                              order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  if (balance) {
    std::size_t n_pos = 0;
    for (const auto& p : pairs) n_pos += p.y == 1 ? 1 : 0;
    plan.weights = class_weights(n_pos, pairs.size() - n_pos);
  }
  return plan;
}

void sgd_step(NetworkParams& params, std::span<const Tensor> grads, double lr) {
  if (grads.size() != params.tensors.size()) throw ShapeError("sgd_step: one gradient per parameter tensor required");
  for (std::size_t t = 0; t < grads.size(); ++t) {
    if (grads[t].shape() != params.tensors[t].shape()) {
      throw ShapeError("sgd_step: gradient shape mismatch for " + params.names.at(t));
    }
    if (!grads[t].all_finite()) throw NumericError("non-finite gradient in " + params.names.at(t));
  }
  for (std::size_t t = 0; t < grads.size(); ++t) {
    if (params.frozen.at(t)) continue;
    auto theta = params.tensors[t].data();
    const auto g = grads[t].data();
    for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= lr * g[i];
  }
}

BatchResult forward_backward(const NetworkParams& params, std::span<const Tensor> images_a,
                             std::span<const Tensor> images_b, std::span<const int> labels,
                             const LossConfig& loss) {
  const std::size_t batch = labels.size();
  if (images_a.size() != batch || images_b.size() != batch) {
    throw ShapeError("forward_backward: images and labels differ in count");
  }
  Graph graph;
  const auto bound = bind_params(graph, params);
  std::vector<NodeId> inputs;
  std::vector<double> d(batch), p(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    const auto a = embed(graph, params.spec, bound, graph.constant(images_a[i]));
    const auto b = embed(graph, params.spec, bound, graph.constant(images_b[i]));
    inputs.push_back(graph.cosine_distance(a.embedding, b.embedding));
    d[i] = graph.value(inputs.back())[0];
    inputs.push_back(head_forward(graph, params.spec, bound, a.embedding, b.embedding));
    p[i] = graph.value(inputs.back())[0];
  }

  BatchResult result;
  result.loss = total_loss(d, p, labels, loss);
  const LossGradient lg = total_loss_gradient(d, p, labels, loss);
  const NodeId total = graph.custom(
      inputs, Tensor::scalar(result.loss.total),
      [lg](const Tensor& g, std::span<const Tensor* const>, const Tensor&) {
        std::vector<Tensor> grads;
        for (std::size_t i = 0; i < lg.d.size(); ++i) {
          grads.push_back(Tensor::scalar(g[0] * lg.d[i]));
          grads.push_back(Tensor::scalar(g[0] * lg.p[i]));
        }
        return grads;
      });
  graph.backward(total);
  result.grads.reserve(bound.ids.size());
  for (auto id : bound.ids) result.grads.push_back(graph.grad(id));
  return result;
}

LossBreakdown forward_loss(const NetworkParams& params, std::span<const Tensor> images_a,
                           std::span<const Tensor> images_b, std::span<const int> labels, const LossConfig& loss) {
  const std::size_t batch = labels.size();
  if (images_a.size() != batch || images_b.size() != batch) {
    throw ShapeError("forward_loss: images and labels differ in count");
  }
  Graph graph;
  const auto bound = bind_params(graph, params);
  std::vector<double> d(batch), p(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    const auto a = embed(graph, params.spec, bound, graph.constant(images_a[i]));
    const auto b = embed(graph, params.spec, bound, graph.constant(images_b[i]));
    d[i] = graph.value(graph.cosine_distance(a.embedding, b.embedding))[0];
    p[i] = graph.value(head_forward(graph, params.spec, bound, a.embedding, b.embedding))[0];
  }
  return total_loss(d, p, labels, loss);
}

namespace {

struct LoadedBatch {
  std::vector<Tensor> a;
  std::vector<Tensor> b;
  std::vector<int> y;
};

LoadedBatch load_batch(const std::vector<PairRecord>& pairs, std::span<const std::size_t> indices,
                       ImageStore& images, const TrainConfig& cfg, std::size_t epoch) {
  LoadedBatch out;
  const std::size_t n = indices.size();
  out.a.resize(n);
  out.b.resize(n);
  out.y.resize(n);
  // Each (epoch, pair, side) owns its own stream, so results do not depend
  // on how work is spread across threads.
  auto work = [&](std::size_t k) {
    const std::size_t idx = indices[k];
    const PairRecord& pr = pairs[idx];
    Rng ra = Rng::stream(cfg.seed, {kAugment, cfg.augment.seed, epoch, idx, 0});
    Rng rb = Rng::stream(cfg.seed, {kAugment, cfg.augment.seed, epoch, idx, 1});
    out.a[k] = augment(images.get(pr.a), cfg.augment, ra);
    out.b[k] = augment(images.get(pr.b), cfg.augment, rb);
    out.y[k] = pr.y;
  };
  const std::size_t workers = std::min(cfg.threads, n);
  if (workers <= 1) {
    for (std::size_t k = 0; k < n; ++k) work(k);
    return out;
  }
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t k = w; k < n; k += workers) work(k);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, std::size_t epoch) {
  char name[32];
  std::snprintf(name, sizeof name, "epoch_%04zu.ckpt", epoch);
  return dir / name;
}

}  // namespace

TrainResult train(NetworkParams net, const std::vector<PairRecord>& pairs, ImageStore& images,
                  const TrainConfig& cfg) {
  cfg.validate();
  if (pairs.empty()) throw ConfigError("training needs at least one pair");
  if (images.target() != net.spec.input) throw ShapeError("image store target does not match the network input");

  TrainResult result;
  const std::size_t freeze_k = cfg.freeze_k.value_or(default_freeze_k(net.spec));
  result.params = freeze_prefix(std::move(net), freeze_k);
  if (!cfg.checkpoint_dir.empty()) std::filesystem::create_directories(cfg.checkpoint_dir);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    const EpochPlan plan = make_batches(pairs, cfg.batch_size, Rng::stream(cfg.seed, {kShuffle, epoch}).next_u64(),
                                        cfg.class_balance);
    LossConfig loss = cfg.loss;
    loss.weights = plan.weights;

    EpochLog row;
    row.epoch = epoch;
    std::size_t correct = 0;
    for (const auto& batch : plan.batches) {
      const LoadedBatch data = load_batch(pairs, batch, images, cfg, epoch);
      const BatchResult br = forward_backward(result.params, data.a, data.b, data.y, loss);
      const double share = static_cast<double>(batch.size()) / static_cast<double>(pairs.size());
      row.l_c += share * br.loss.contrastive;
      row.l_r += share * br.loss.regression;
      row.l_bce += share * br.loss.bce;
      row.l_total += share * br.loss.total;
      for (std::size_t i = 0; i < batch.size(); ++i) {
        correct += ((br.loss.p[i] >= 0.5 ? 1 : 0) == data.y[i]) ? 1 : 0;
      }
      sgd_step(result.params, br.grads, cfg.lr);
    }
    row.train_acc = static_cast<double>(correct) / static_cast<double>(pairs.size());
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.log.rows.push_back(row);

    if (!cfg.checkpoint_dir.empty() && cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0) {
      const auto path = checkpoint_path(cfg.checkpoint_dir, epoch);
      save_params(result.params, path);
      result.checkpoints.push_back(path);
    }
  }
  return result;
}

}  // namespace dgnet
