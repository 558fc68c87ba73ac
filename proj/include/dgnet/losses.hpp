#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace dgnet {

/// Per-class loss multipliers. Inverse-frequency weights make both classes
/// contribute the same total weight.
struct ClassWeights {
  double pos = 1.0;
  double neg = 1.0;
  friend bool operator==(const ClassWeights&, const ClassWeights&) = default;
};

struct LossConfig {
  double margin = 0.5;
  bool enable_lr = true;   // regression (MSE) term
  bool enable_bce = true;  // binary cross-entropy term
  ClassWeights weights;
  double bce_clamp_eps = 1e-7;

  /// Training-time check: margin in (0, 1], positive weights.
  void validate() const;
};

struct LossBreakdown {
  double contrastive = 0.0;
  double regression = 0.0;
  double bce = 0.0;
  double total = 0.0;
  std::vector<double> d;
  std::vector<double> p;
};

/// Partial derivatives of the total loss w.r.t. each pair's distance and
/// head probability.
struct LossGradient {
  std::vector<double> d;
  std::vector<double> p;
};

/// <a,b> / (|a| |b|), or 0 when either norm is below 1e-12.
double cosine_similarity(std::span<const double> a, std::span<const double> b);
double cosine_distance(std::span<const double> a, std::span<const double> b);

/// (1/2B) sum w(y) [y d^2 + (1-y) max(margin - d, 0)^2] with d = 1 - cos.
double contrastive_loss(std::span<const double> d, std::span<const int> y, const LossConfig& cfg);
/// (1/B) sum w(y) (y - p)^2
double mse_loss(std::span<const double> p, std::span<const int> y, const LossConfig& cfg);
/// (1/B) sum w(y) * -[y ln p + (1-y) ln(1-p)], p clamped to [eps, 1-eps].
double bce_loss(std::span<const double> p, std::span<const int> y, const LossConfig& cfg);

ClassWeights class_weights(std::size_t n_pos, std::size_t n_neg);

/// Disabled terms are reported as 0 and excluded from the total.
LossBreakdown total_loss(std::span<const double> d, std::span<const double> p,
                         std::span<const int> y, const LossConfig& cfg);
/// Hinge subgradient at d == margin is 0; clamped BCE terms contribute 0.
LossGradient total_loss_gradient(std::span<const double> d, std::span<const double> p,
                                 std::span<const int> y, const LossConfig& cfg);

}  // namespace dgnet
