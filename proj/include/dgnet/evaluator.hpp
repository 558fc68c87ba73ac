#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dgnet/dataset.hpp"
#include "dgnet/network.hpp"
#include "dgnet/trainer.hpp"

namespace dgnet {

enum class ScoreMode { head, cosine };
std::string_view to_string(ScoreMode m);
std::optional<ScoreMode> parse_score_mode(std::string_view s);

/// Higher score = more likely the same identity.
struct ScoreSet {
  std::vector<double> genuine;
  std::vector<double> impostor;
};

struct RocPoint {
  double threshold;  // +inf for the accept-nothing point
  double far;
  double gar;
};

/// One point per candidate threshold, from +inf down to the lowest score.
struct RocCurve {
  std::vector<RocPoint> points;
};

struct OperatingPoint {
  double gar = 0.0;
  double threshold = 0.0;
};

struct AccuracyResult {
  double accuracy = 0.0;
  double threshold = 0.0;
  double accuracy_at_half = 0.0;  // accept iff score >= 0.5
};

inline const std::vector<double> kDefaultFarTargets{0.001, 0.01, 0.1};

/// Scores every pair without augmentation. Embeddings are computed once per
/// distinct image, in parallel over `threads` workers.
ScoreSet score_pairs(const NetworkParams& params, const std::vector<PairRecord>& pairs, ImageStore& images,
                     ScoreMode mode, std::size_t threads = 1);

/// Accept iff score >= threshold. Candidate thresholds are the observed
/// scores plus +inf.
RocCurve roc_curve(const ScoreSet& scores);
/// Smallest candidate threshold whose FAR does not exceed `far_target`.
OperatingPoint gar_at_far(const ScoreSet& scores, double far_target);
/// Best (TP+TN)/(P+N) over candidate thresholds; ties go to the lowest.
AccuracyResult best_accuracy(const ScoreSet& scores);

std::string roc_csv(const RocCurve& curve);
/// {mode, n_genuine, n_impostor, gar_at:{...}, best_accuracy, best_threshold, acc_at_0.5}
nlohmann::json metrics_report(const ScoreSet& scores, ScoreMode mode,
                              const std::vector<double>& far_targets = kDefaultFarTargets);

/// Training pairs: (genuine, disguised) positives plus (genuine, impostor)
/// negatives within each identity.
std::vector<PairRecord> training_pairs(const std::vector<ImageRecord>& records);

struct AblationData {
  NetworkSpec spec;
  std::vector<ImageRecord> train_records;
  std::vector<ImageRecord> web_records;  // merged when a row sets use_web
  std::vector<PairRecord> eval_pairs;
  ImageStore* images = nullptr;
  ScoreMode mode = ScoreMode::head;
};

struct AblationRow {
  std::size_t index = 0;
  std::string name;
  std::string fingerprint;
  nlohmann::json config;
  bool ok = false;
  std::string error;
  double best_accuracy = 0.0;
  double best_threshold = 0.0;
  std::vector<double> gar;  // aligned with kDefaultFarTargets
  std::size_t train_pairs = 0;
};

/// Each grid entry is a JSON object of TrainConfig overrides plus optional
/// "name" and "use_web". Row i trains from seed base.seed + i. A failing row
/// is recorded and the grid continues.
std::vector<AblationRow> run_ablation(const nlohmann::json& grid, const AblationData& data,
                                      const TrainConfig& base);

std::string ablation_csv(const std::vector<AblationRow>& rows);
nlohmann::json ablation_json(const std::vector<AblationRow>& rows);

}  // namespace dgnet
