#include "dgnet/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dgnet/error.hpp"

namespace dgnet {

namespace {

void check_batch(std::size_t values, std::span<const int> y, const char* what) {
  if (y.empty()) throw ConfigError(std::string(what) + ": empty batch");
  if (values != y.size()) {
    throw ShapeError(std::string(what) + ": " + std::to_string(values) + " values for " +
                     std::to_string(y.size()) + " labels");
  }
  for (int label : y) {
    if (label != 0 && label != 1) throw DomainError(std::string(what) + ": labels must be 0 or 1");
  }
}

void check_weights(const ClassWeights& w) {
  if (!(w.pos > 0.0) || !(w.neg > 0.0)) throw ConfigError("class weights must be positive");
}

void check_probabilities(std::span<const double> p, const char* what) {
  for (double v : p) {
    if (!(v >= 0.0 && v <= 1.0)) throw DomainError(std::string(what) + ": probability outside [0,1]");
  }
}

double weight_of(int y, const ClassWeights& w) { return y == 1 ? w.pos : w.neg; }

double clamp_probability(double p, double eps) { return std::clamp(p, eps, 1.0 - eps); }

}  // namespace

void LossConfig::validate() const {
  if (!(margin > 0.0 && margin <= 1.0)) throw ConfigError("margin must lie in (0, 1]");
  check_weights(weights);
  if (!(bce_clamp_eps > 0.0 && bce_clamp_eps < 0.5)) throw ConfigError("bce_clamp_eps must lie in (0, 0.5)");
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ShapeError("cosine_similarity: dimensions " + std::to_string(a.size()) + " and " +
                     std::to_string(b.size()));
  }
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (std::sqrt(aa) < 1e-12 || std::sqrt(bb) < 1e-12) return 0.0;
  // sqrt(aa*aa) == aa exactly, so identical vectors give exactly 1; rounding
  // can still push nearly parallel vectors a hair above 1.
  return std::min(1.0, ab / std::sqrt(aa * bb));
}

double cosine_distance(std::span<const double> a, std::span<const double> b) {
  return 1.0 - cosine_similarity(a, b);
}

double contrastive_loss(std::span<const double> d, std::span<const int> y, const LossConfig& cfg) {
  check_batch(d.size(), y, "contrastive_loss");
  check_weights(cfg.weights);
  if (!(cfg.margin >= 0.0 && cfg.margin <= 1.0)) throw ConfigError("contrastive_loss: margin outside [0,1]");
  double sum = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!(d[i] >= 0.0 && d[i] <= 1.0)) throw DomainError("contrastive_loss: distance outside [0,1]");
    const double hinge = std::max(cfg.margin - d[i], 0.0);
    const double term = y[i] == 1 ? d[i] * d[i] : hinge * hinge;
    sum += weight_of(y[i], cfg.weights) * term;
  }
  return sum / (2.0 * static_cast<double>(d.size()));
}

double mse_loss(std::span<const double> p, std::span<const int> y, const LossConfig& cfg) {
  check_batch(p.size(), y, "mse_loss");
  check_weights(cfg.weights);
  check_probabilities(p, "mse_loss");
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double r = static_cast<double>(y[i]) - p[i];
    sum += weight_of(y[i], cfg.weights) * r * r;
  }
  return sum / static_cast<double>(p.size());
}

double bce_loss(std::span<const double> p, std::span<const int> y, const LossConfig& cfg) {
  check_batch(p.size(), y, "bce_loss");
  check_weights(cfg.weights);
  check_probabilities(p, "bce_loss");
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pc = clamp_probability(p[i], cfg.bce_clamp_eps);
    const double nll = y[i] == 1 ? -std::log(pc) : -std::log1p(-pc);
    sum += weight_of(y[i], cfg.weights) * nll;
  }
  return sum / static_cast<double>(p.size());
}

ClassWeights class_weights(std::size_t n_pos, std::size_t n_neg) {
  if (n_pos == 0 || n_neg == 0) {
    throw ConfigError("class balancing needs both classes present (n_pos=" + std::to_string(n_pos) +
                      ", n_neg=" + std::to_string(n_neg) + ")");
  }
  const double total = static_cast<double>(n_pos + n_neg);
  return {total / (2.0 * static_cast<double>(n_pos)), total / (2.0 * static_cast<double>(n_neg))};
}

LossBreakdown total_loss(std::span<const double> d, std::span<const double> p,
                         std::span<const int> y, const LossConfig& cfg) {
  LossBreakdown out;
  out.contrastive = contrastive_loss(d, y, cfg);
  if (cfg.enable_lr) out.regression = mse_loss(p, y, cfg);
  if (cfg.enable_bce) out.bce = bce_loss(p, y, cfg);
  if (p.size() != y.size()) throw ShapeError("total_loss: probability/label length mismatch");
  out.total = out.contrastive + out.regression + out.bce;
  out.d.assign(d.begin(), d.end());
  out.p.assign(p.begin(), p.end());
  return out;
}

LossGradient total_loss_gradient(std::span<const double> d, std::span<const double> p,
                                 std::span<const int> y, const LossConfig& cfg) {
  check_batch(d.size(), y, "total_loss_gradient");
  if (p.size() != y.size()) throw ShapeError("total_loss_gradient: probability/label length mismatch");
  const double batch = static_cast<double>(y.size());
  LossGradient g{std::vector<double>(d.size(), 0.0), std::vector<double>(p.size(), 0.0)};
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double w = weight_of(y[i], cfg.weights);
    const double hinge = std::max(cfg.margin - d[i], 0.0);
    g.d[i] = w / batch * (y[i] == 1 ? d[i] : -hinge);
    if (cfg.enable_lr) g.p[i] += 2.0 * w / batch * (p[i] - static_cast<double>(y[i]));
    if (cfg.enable_bce) {
      const double eps = cfg.bce_clamp_eps;
      if (p[i] > eps && p[i] < 1.0 - eps) {
        g.p[i] += w / batch * (y[i] == 1 ? -1.0 / p[i] : 1.0 / (1.0 - p[i]));
      }
    }
  }
  return g;
}

}  // namespace dgnet
