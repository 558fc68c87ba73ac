#include "dgnet/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <thread>

#include "dgnet/error.hpp"
#include "dgnet/losses.hpp"

namespace dgnet {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_populations(const ScoreSet& s, const char* what) {
  if (s.genuine.empty() || s.impostor.empty()) {
    throw DomainError(std::string(what) + ": both genuine and impostor scores are required");
  }
  for (const auto* v : {&s.genuine, &s.impostor}) {
    for (double x : *v) {
      if (!std::isfinite(x)) throw DomainError(std::string(what) + ": non-finite score");
    }
  }
}

// Counts of scores >= t, via sorted ascending copies.
struct SortedScores {
  std::vector<double> genuine;
  std::vector<double> impostor;
  std::vector<double> thresholds;  // distinct observed scores ascending, then +inf

  explicit SortedScores(const ScoreSet& s) : genuine(s.genuine), impostor(s.impostor) {
    std::sort(genuine.begin(), genuine.end());
    std::sort(impostor.begin(), impostor.end());
    thresholds = genuine;
    thresholds.insert(thresholds.end(), impostor.begin(), impostor.end());
    std::sort(thresholds.begin(), thresholds.end());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
    thresholds.push_back(kInf);
  }

  static std::size_t at_least(const std::vector<double>& v, double t) {
    return static_cast<std::size_t>(v.end() - std::lower_bound(v.begin(), v.end(), t));
  }
  std::size_t genuine_accepted(double t) const { return at_least(genuine, t); }
  std::size_t impostor_accepted(double t) const { return at_least(impostor, t); }
};

std::string fmt(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string far_key(double far) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", far);
  return buf;
}

nlohmann::json threshold_json(double t) { return std::isinf(t) ? nlohmann::json("inf") : nlohmann::json(t); }

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string image_key(const ImageRecord& r) {
  std::string key = r.path;
  if (r.bbox) key += "#" + std::to_string(r.bbox->x) + "," + std::to_string(r.bbox->y) + "," +
                     std::to_string(r.bbox->w) + "," + std::to_string(r.bbox->h);
  return key;
}

double head_probability(const NetworkParams& params, const Tensor& emb_a, const Tensor& emb_b) {
  Graph graph;
  const auto bound = bind_params(graph, params);
  const NodeId p = head_forward(graph, params.spec, bound, graph.constant(emb_a), graph.constant(emb_b));
  return graph.value(p)[0];
}

}  // namespace

std::string_view to_string(ScoreMode m) { return m == ScoreMode::head ? "head" : "cosine"; }

std::optional<ScoreMode> parse_score_mode(std::string_view s) {
  if (s == "head") return ScoreMode::head;
  if (s == "cosine") return ScoreMode::cosine;
  return std::nullopt;
}

ScoreSet score_pairs(const NetworkParams& params, const std::vector<PairRecord>& pairs, ImageStore& images,
                     ScoreMode mode, std::size_t threads) {
  std::map<std::string, const ImageRecord*> unique;
  for (const auto& p : pairs) {
    unique.emplace(image_key(p.a), &p.a);
    unique.emplace(image_key(p.b), &p.b);
  }
  std::vector<std::pair<std::string, const ImageRecord*>> work(unique.begin(), unique.end());
  std::vector<Tensor> embeddings(work.size());
  auto run = [&](std::size_t lane, std::size_t lanes) {
    for (std::size_t i = lane; i < work.size(); i += lanes) embeddings[i] = embedding(params, images.get(*work[i].second));
  };
  const std::size_t lanes = std::max<std::size_t>(1, std::min(threads, work.size()));
  if (lanes == 1) {
    run(0, 1);
  } else {
    std::vector<std::exception_ptr> errors(lanes);
    {
      std::vector<std::jthread> pool;
      for (std::size_t l = 0; l < lanes; ++l) {
        pool.emplace_back([&, l] {
          try {
            run(l, lanes);
          } catch (...) {
            errors[l] = std::current_exception();
          }
        });
      }
    }
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < work.size(); ++i) index[work[i].first] = i;

  ScoreSet scores;
  for (const auto& p : pairs) {
    const Tensor& ea = embeddings[index.at(image_key(p.a))];
    const Tensor& eb = embeddings[index.at(image_key(p.b))];
    const double s = mode == ScoreMode::cosine ? cosine_similarity(ea.data(), eb.data())
                                               : head_probability(params, ea, eb);
    (p.y == 1 ? scores.genuine : scores.impostor).push_back(s);
  }
  return scores;
}

RocCurve roc_curve(const ScoreSet& scores) {
  require_populations(scores, "roc_curve");
  const SortedScores s(scores);
  const double n_gen = static_cast<double>(s.genuine.size());
  const double n_imp = static_cast<double>(s.impostor.size());
  RocCurve curve;
  for (auto it = s.thresholds.rbegin(); it != s.thresholds.rend(); ++it) {
    curve.points.push_back({*it, static_cast<double>(s.impostor_accepted(*it)) / n_imp,
                            static_cast<double>(s.genuine_accepted(*it)) / n_gen});
  }
  return curve;
}

OperatingPoint gar_at_far(const ScoreSet& scores, double far_target) {
  if (!(far_target > 0.0 && far_target <= 1.0)) throw DomainError("far_target must lie in (0, 1]");
  require_populations(scores, "gar_at_far");
  const SortedScores s(scores);
  const double n_imp = static_cast<double>(s.impostor.size());
  for (double t : s.thresholds) {
    if (static_cast<double>(s.impostor_accepted(t)) / n_imp <= far_target) {
      return {static_cast<double>(s.genuine_accepted(t)) / static_cast<double>(s.genuine.size()), t};
    }
  }
  return {0.0, kInf};  // unreachable: +inf accepts nothing
}

AccuracyResult best_accuracy(const ScoreSet& scores) {
  require_populations(scores, "best_accuracy");
  const SortedScores s(scores);
  const std::size_t total = s.genuine.size() + s.impostor.size();
  auto correct_at = [&](double t) { return s.genuine_accepted(t) + (s.impostor.size() - s.impostor_accepted(t)); };
  std::size_t best = 0;
  double best_t = kInf;
  for (double t : s.thresholds) {
    const std::size_t c = correct_at(t);
    if (c > best) {
      best = c;
      best_t = t;
    }
  }
  return {static_cast<double>(best) / static_cast<double>(total), best_t,
          static_cast<double>(correct_at(0.5)) / static_cast<double>(total)};
}

std::string roc_csv(const RocCurve& curve) {
  std::string out = "threshold,far,gar\n";
  for (const auto& p : curve.points) out += fmt(p.threshold) + "," + fmt(p.far) + "," + fmt(p.gar) + "\n";
  return out;
}

nlohmann::json metrics_report(const ScoreSet& scores, ScoreMode mode, const std::vector<double>& far_targets) {
  nlohmann::json j;
  j["mode"] = std::string(to_string(mode));
  j["n_genuine"] = scores.genuine.size();
  j["n_impostor"] = scores.impostor.size();
  nlohmann::json gar = nlohmann::json::object();
  for (double far : far_targets) gar[far_key(far)] = gar_at_far(scores, far).gar;
  j["gar_at"] = gar;
  const auto acc = best_accuracy(scores);
  j["best_accuracy"] = acc.accuracy;
  j["best_threshold"] = threshold_json(acc.threshold);
  j["acc_at_0.5"] = acc.accuracy_at_half;
  return j;
}

std::vector<PairRecord> training_pairs(const std::vector<ImageRecord>& records) {
  auto pairs = generate_pairs(records, Protocol::obfuscation);
  auto negatives = generate_pairs(records, Protocol::impersonation);
  pairs.insert(pairs.end(), negatives.begin(), negatives.end());
  return pairs;
}

std::vector<AblationRow> run_ablation(const nlohmann::json& grid, const AblationData& data,
                                      const TrainConfig& base) {
  if (!grid.is_array()) throw ConfigError("ablation grid must be a JSON array");
  if (data.images == nullptr) throw ConfigError("ablation needs an image store");
  std::vector<AblationRow> rows;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    AblationRow row;
    row.index = i;
    row.config = grid[i];
    try {
      if (!grid[i].is_object()) throw ConfigError("grid entry must be an object");
      nlohmann::json delta = grid[i];
      row.name = delta.value("name", "row" + std::to_string(i));
      const bool use_web = delta.value("use_web", false);
      delta.erase("name");
      delta.erase("use_web");
      TrainConfig cfg = TrainConfig::from_json(delta, base);
      cfg.seed = base.seed + i;
      cfg.checkpoint_dir.clear();
      nlohmann::json resolved = cfg.to_json();
      resolved["use_web"] = use_web;
      row.config = resolved;
      row.fingerprint = hex64(fnv1a(resolved.dump() + data.spec.to_json().dump()));

      const auto records = use_web ? merge_weak_labels(data.train_records, data.web_records) : data.train_records;
      const auto pairs = training_pairs(records);
      row.train_pairs = pairs.size();
      const auto trained = train(build_network(data.spec, cfg.seed), pairs, *data.images, cfg);
      const ScoreSet scores = score_pairs(trained.params, data.eval_pairs, *data.images, data.mode, cfg.threads);
      const auto acc = best_accuracy(scores);
      row.best_accuracy = acc.accuracy;
      row.best_threshold = acc.threshold;
      for (double far : kDefaultFarTargets) row.gar.push_back(gar_at_far(scores, far).gar);
      row.ok = true;
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "index,name,fingerprint,status,train_pairs,best_accuracy,best_threshold";
  for (double far : kDefaultFarTargets) out += ",gar@" + far_key(far);
  out += ",error\n";
  for (const auto& r : rows) {
    std::string err = r.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    out += std::to_string(r.index) + "," + r.name + "," + r.fingerprint + "," + (r.ok ? "ok" : "error") + "," +
           std::to_string(r.train_pairs) + "," + (r.ok ? fmt(r.best_accuracy) : "") + "," +
           (r.ok ? fmt(r.best_threshold) : "");
    for (std::size_t k = 0; k < kDefaultFarTargets.size(); ++k) out += "," + (r.ok ? fmt(r.gar[k]) : "");
    out += "," + err + "\n";
  }
  return out;
}

nlohmann::json ablation_json(const std::vector<AblationRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json j{{"index", r.index},     {"name", r.name},          {"fingerprint", r.fingerprint},
                     {"config", r.config},   {"status", r.ok ? "ok" : "error"}, {"train_pairs", r.train_pairs}};
    if (r.ok) {
      j["best_accuracy"] = r.best_accuracy;
      j["best_threshold"] = threshold_json(r.best_threshold);
      nlohmann::json gar = nlohmann::json::object();
      for (std::size_t k = 0; k < kDefaultFarTargets.size(); ++k) gar[far_key(kDefaultFarTargets[k])] = r.gar[k];
      j["gar_at"] = gar;
    } else {
      j["error"] = r.error;
    }
    out.push_back(std::move(j));
  }
  return out;
}

}  // namespace dgnet
