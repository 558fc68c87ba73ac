#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dgnet/augment.hpp"
#include "dgnet/dataset.hpp"
#include "dgnet/losses.hpp"
#include "dgnet/network.hpp"

namespace dgnet {

struct TrainConfig {
  double lr = 1e-3;
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  std::optional<std::size_t> freeze_k;  // unset: profile default
  LossConfig loss;
  AugmentConfig augment;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 0;  // epochs; 0 disables periodic checkpoints
  std::filesystem::path checkpoint_dir;
  bool class_balance = true;
  std::size_t threads = 1;  // image loading/augmentation workers

  void validate() const;
  nlohmann::json to_json() const;
  /// Fields present in `j` override `base`; unknown keys are rejected.
  static TrainConfig from_json(const nlohmann::json& j, TrainConfig base);
  static TrainConfig from_json(const nlohmann::json& j);
};

struct EpochLog {
  std::size_t epoch = 0;
  double l_c = 0.0;
  double l_r = 0.0;
  double l_bce = 0.0;
  double l_total = 0.0;
  double train_acc = 0.0;
  double seconds = 0.0;
};

struct TrainLog {
  std::vector<EpochLog> rows;

  /// `epoch,l_c,l_r,l_bce,l_total,train_acc,seconds`
  std::string csv() const;
  void write_csv(const std::filesystem::path& path) const;
};

struct EpochPlan {
  std::vector<std::vector<std::size_t>> batches;  // indices into the pair list
  ClassWeights weights;
};

/// Seeded shuffle into batches of `batch_size`; the last batch may be short.
/// With `balance`, inverse-frequency class weights ride along.
EpochPlan make_batches(std::span<const PairRecord> pairs, std::size_t batch_size, std::uint64_t seed,
                       bool balance);

/// theta -= lr * g for every unfrozen tensor. All gradients are checked for
/// finiteness before anything is written.
void sgd_step(NetworkParams& params, std::span<const Tensor> grads, double lr);

struct BatchResult {
  LossBreakdown loss;
  std::vector<Tensor> grads;  // aligned with params.tensors
};

/// Forward both streams for every pair, evaluate the combined loss and
/// backpropagate to all parameters (frozen ones included).
BatchResult forward_backward(const NetworkParams& params, std::span<const Tensor> images_a,
                             std::span<const Tensor> images_b, std::span<const int> labels,
                             const LossConfig& loss);

/// Loss only, no gradient bookkeeping.
LossBreakdown forward_loss(const NetworkParams& params, std::span<const Tensor> images_a,
                           std::span<const Tensor> images_b, std::span<const int> labels, const LossConfig& loss);

struct TrainResult {
  NetworkParams params;
  TrainLog log;
  std::vector<std::filesystem::path> checkpoints;
};

TrainResult train(NetworkParams net, const std::vector<PairRecord>& pairs, ImageStore& images,
                  const TrainConfig& cfg);

}  // namespace dgnet
