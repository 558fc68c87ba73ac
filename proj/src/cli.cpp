#include "dgnet/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "dgnet/diagnostics.hpp"
#include "dgnet/error.hpp"
#include "dgnet/evaluator.hpp"
#include "dgnet/trainer.hpp"

namespace dgnet::cli {

namespace {

namespace fs = std::filesystem;

// Raised for bad flag values discovered after parsing.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

NetworkSpec spec_for(const std::string& profile) {
  if (profile == "tiny") return NetworkSpec::tiny();
  if (profile == "vggface16") return NetworkSpec::vggface16();
  throw UsageError("unknown profile '" + profile + "' (expected tiny or vggface16)");
}

Protocol protocol_for(const std::string& name) {
  const auto p = parse_protocol(name);
  if (!p) throw UsageError("unknown protocol '" + name + "'");
  return *p;
}

ScoreMode mode_for(const std::string& name) {
  const auto m = parse_score_mode(name);
  if (!m) throw UsageError("unknown score mode '" + name + "' (expected head or cosine)");
  return *m;
}

Split split_for(const std::string& name) {
  const auto s = parse_split(name);
  if (!s) throw UsageError("unknown split '" + name + "'");
  return *s;
}

std::size_t loader_threads() {
  if (const char* env = std::getenv("DGNET_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
    throw UsageError(std::string("DGNET_THREADS must be a positive integer, got '") + env + "'");
  }
  return 1;
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw UsageError("cannot open JSON file: " + path.string());
  try {
    return nlohmann::json::parse(f);
  } catch (const nlohmann::json::parse_error& e) {
    throw UsageError("invalid JSON in " + path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
}

// Relative image paths are taken relative to their manifest.
std::vector<ImageRecord> load_records(const fs::path& manifest) {
  auto records = parse_manifest(manifest);
  const fs::path base = manifest.parent_path();
  for (auto& r : records) {
    if (fs::path(r.path).is_relative()) r.path = (base / r.path).lexically_normal().string();
  }
  return records;
}

struct TrainFlags {
  std::string config;
  double margin = 0.5;
  double lr = 1e-3;
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  std::size_t freeze_k = 0;
  std::size_t checkpoint_every = 0;
  bool no_balance = false;
  bool no_lr_loss = false;
  bool no_bce_loss = false;
  bool no_augment = false;
  std::vector<CLI::Option*> options;  // margin, lr, epochs, batch, seed, freeze, ckpt

  void add(CLI::App& app) {
    app.add_option("--config", config, "JSON training config; flags override it");
    options = {app.add_option("--margin", margin, "contrastive margin in (0,1]"),
               app.add_option("--lr", lr, "SGD learning rate"),
               app.add_option("--epochs", epochs, "training epochs"),
               app.add_option("--batch-size", batch_size, "pairs per SGD step"),
               app.add_option("--seed", seed, "seed for every random draw (default 0)"),
               app.add_option("--freeze-k", freeze_k, "number of leading conv layers to freeze"),
               app.add_option("--checkpoint-every", checkpoint_every, "epochs between checkpoints (0 = final only)")};
    app.add_flag("--no-balance", no_balance, "disable class-balanced loss weights");
    app.add_flag("--no-lr-loss", no_lr_loss, "drop the regression term");
    app.add_flag("--no-bce-loss", no_bce_loss, "drop the cross-entropy term");
    app.add_flag("--no-augment", no_augment, "disable data augmentation");
  }

  TrainConfig resolve() const {
    TrainConfig cfg;
    if (!config.empty()) {
      try {
        cfg = TrainConfig::from_json(read_json(config));
      } catch (const ConfigError& e) {
        throw UsageError(e.what());
      }
    }
    if (options[0]->count()) cfg.loss.margin = margin;
    if (options[1]->count()) cfg.lr = lr;
    if (options[2]->count()) cfg.epochs = epochs;
    if (options[3]->count()) cfg.batch_size = batch_size;
    if (options[4]->count()) cfg.seed = seed;
    if (options[5]->count()) cfg.freeze_k = freeze_k;
    if (options[6]->count()) cfg.checkpoint_every = checkpoint_every;
    if (no_balance) cfg.class_balance = false;
    if (no_lr_loss) cfg.loss.enable_lr = false;
    if (no_bce_loss) cfg.loss.enable_bce = false;
    if (no_augment) cfg.augment = AugmentConfig::none();
    cfg.threads = loader_threads();
    try {
      cfg.validate();
    } catch (const ConfigError& e) {
      throw UsageError(e.what());
    }
    return cfg;
  }
};

int run_train(const std::string& manifest, const std::string& web_manifest, const std::string& profile,
              const std::string& out_dir, const TrainFlags& flags, std::ostream& out) {
  const NetworkSpec spec = spec_for(profile);
  TrainConfig cfg = flags.resolve();
  const fs::path out_path(out_dir);
  fs::create_directories(out_path);
  if (cfg.checkpoint_every > 0) cfg.checkpoint_dir = out_path / "checkpoints";

  nlohmann::json resolved{{"command", "train"},  {"manifest", manifest}, {"web_manifest", web_manifest},
                          {"profile", profile},  {"network", spec.to_json()}, {"train", cfg.to_json()}};
  write_text(out_path / "config.json", resolved.dump(2) + "\n");

  auto records = filter_split(load_records(manifest), Split::train);
  if (!web_manifest.empty()) records = merge_weak_labels(records, filter_split(load_records(web_manifest), Split::train));
  const auto pairs = training_pairs(records);
  if (pairs.empty()) throw ConfigError("manifest yields no training pairs");

  ImageStore images({}, spec.input);
  const auto result = train(build_network(spec, cfg.seed), pairs, images, cfg);
  result.log.write_csv(out_path / "train_log.csv");
  save_params(result.params, out_path / "model.ckpt");
  if (!result.log.rows.empty()) {
    const auto& last = result.log.rows.back();
    out << "trained " << pairs.size() << " pairs for " << cfg.epochs << " epochs; final l_total=" << last.l_total
        << " train_acc=" << last.train_acc << "\n";
  }
  out << "wrote " << (out_path / "model.ckpt").string() << "\n";
  return kOk;
}

int run_eval(const std::string& checkpoint, const std::string& manifest, const std::string& protocol,
             const std::string& mode_name, const std::string& split_name, const std::string& out_dir,
             std::ostream& out) {
  const Protocol proto = protocol_for(protocol);
  const ScoreMode mode = mode_for(mode_name);
  const Split split = split_for(split_name);
  const fs::path out_path(out_dir);
  fs::create_directories(out_path);
  nlohmann::json resolved{{"command", "eval"}, {"checkpoint", checkpoint}, {"manifest", manifest},
                          {"protocol", protocol}, {"mode", mode_name},     {"split", split_name},
                          {"threads", loader_threads()}};
  write_text(out_path / "config.json", resolved.dump(2) + "\n");

  const NetworkParams params = load_params(checkpoint);
  const auto pairs = generate_pairs(filter_split(load_records(manifest), split), proto);
  ImageStore images({}, params.spec.input);
  const ScoreSet scores = score_pairs(params, pairs, images, mode, loader_threads());
  const auto report = metrics_report(scores, mode);
  write_text(out_path / "metrics.json", report.dump(2) + "\n");
  write_text(out_path / "roc.csv", roc_csv(roc_curve(scores)));
  out << report.dump() << "\n";
  return kOk;
}

int run_pairs(const std::string& manifest, const std::string& protocol, const std::string& split_name,
              std::uint64_t seed, std::optional<std::size_t> max_pairs, const std::string& out_file,
              std::ostream& out) {
  const Protocol proto = protocol_for(protocol);
  const auto records = parse_manifest(manifest);
  std::vector<PairRecord> pairs;
  for (Split s : {Split::train, Split::val, Split::test}) {
    if (!split_name.empty() && s != split_for(split_name)) continue;
    auto part = generate_pairs(filter_split(records, s), proto, seed, max_pairs);
    pairs.insert(pairs.end(), part.begin(), part.end());
  }
  write_pairs_csv(out_file, pairs);
  nlohmann::json resolved{{"command", "pairs"}, {"manifest", manifest}, {"protocol", protocol},
                          {"split", split_name.empty() ? nlohmann::json(nullptr) : nlohmann::json(split_name)},
                          {"seed", seed}, {"out", out_file}};
  if (max_pairs) resolved["max_pairs"] = *max_pairs;
  out << resolved.dump() << "\n" << "wrote " << pairs.size() << " pairs to " << out_file << "\n";
  return kOk;
}

int run_gradcheck(const std::string& profile, double tol, double eps, std::uint64_t seed, std::size_t coords,
                  std::ostream& out) {
  const NetworkSpec spec = spec_for(profile);
  if (!(eps >= 1e-7 && eps <= 1e-3)) throw UsageError("--eps must lie in [1e-7, 1e-3]");
  out << nlohmann::json{{"command", "gradcheck"}, {"profile", profile}, {"tol", tol}, {"eps", eps},
                        {"seed", seed}, {"coords_per_tensor", coords}}.dump()
      << "\n";
  double worst = 0.0;
  for (const auto& pc : check_primitives(20, eps)) {
    out << "primitive " << pc.name << " max_relative_error=" << pc.max_relative_error << "\n";
    worst = std::max(worst, pc.max_relative_error);
  }
  const auto net = check_network(spec, seed, eps, coords);
  out << "network " << profile << " coordinates=" << net.coordinates_checked
      << " max_relative_error=" << net.max_relative_error << "\n";
  worst = std::max(worst, net.max_relative_error);
  out << "max relative error " << worst << (worst < tol ? " < " : " >= ") << tol << "\n";
  return worst < tol ? kOk : kRuntimeError;
}

int run_ablate(const std::string& grid_file, const std::string& manifest, const std::string& web_manifest,
               const std::string& profile, const std::string& mode_name, const std::string& eval_split,
               const std::string& out_dir, const TrainFlags& flags, std::ostream& out) {
  const NetworkSpec spec = spec_for(profile);
  const ScoreMode mode = mode_for(mode_name);
  const Split split = split_for(eval_split);
  const TrainConfig base = flags.resolve();
  const nlohmann::json grid = read_json(grid_file);
  if (!grid.is_array()) throw UsageError("grid file must hold a JSON array of config overrides");
  const fs::path out_path(out_dir);
  fs::create_directories(out_path);
  nlohmann::json resolved{{"command", "ablate"}, {"grid", grid},         {"manifest", manifest},
                          {"web_manifest", web_manifest}, {"profile", profile}, {"mode", mode_name},
                          {"eval_split", eval_split}, {"network", spec.to_json()}, {"train", base.to_json()}};
  write_text(out_path / "config.json", resolved.dump(2) + "\n");

  const auto records = load_records(manifest);
  ImageStore images({}, spec.input);
  AblationData data;
  data.spec = spec;
  data.train_records = filter_split(records, Split::train);
  if (!web_manifest.empty()) data.web_records = filter_split(load_records(web_manifest), Split::train);
  data.eval_pairs = generate_pairs(filter_split(records, split), Protocol::overall);
  data.images = &images;
  data.mode = mode;

  const auto rows = run_ablation(grid, data, base);
  write_text(out_path / "ablation.csv", ablation_csv(rows));
  write_text(out_path / "ablation.json", ablation_json(rows).dump(2) + "\n");
  std::size_t failed = 0;
  for (const auto& r : rows) {
    out << r.name << ": " << (r.ok ? "accuracy=" + std::to_string(r.best_accuracy) : "error: " + r.error) << "\n";
    failed += r.ok ? 0 : 1;
  }
  out << rows.size() << " rows, " << failed << " failed\n";
  return kOk;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Siamese disguised-face verification: training, evaluation and diagnostics", "dgnet"};
  app.require_subcommand(1);

  std::string manifest, web_manifest, profile = "tiny", out_dir, checkpoint, protocol = "overall", mode = "head",
                                      split, grid;
  double tol = 1e-4, eps = 1e-5;
  std::uint64_t seed = 0;
  std::size_t coords = 24, max_pairs = 0;

  auto* train_cmd = app.add_subcommand("train", "train a network on a manifest");
  TrainFlags train_flags;
  train_cmd->add_option("--manifest", manifest, "JSON-lines image manifest")->required();
  train_cmd->add_option("--web-manifest", web_manifest, "weakly labelled extra genuine images");
  train_cmd->add_option("--profile", profile, "network profile (tiny|vggface16)");
  train_cmd->add_option("--out", out_dir, "output directory")->required();
  train_flags.add(*train_cmd);

  auto* eval_cmd = app.add_subcommand("eval", "score a protocol and report ROC / GAR@FAR");
  std::string eval_split = "test";
  eval_cmd->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  eval_cmd->add_option("--manifest", manifest, "JSON-lines image manifest")->required();
  eval_cmd->add_option("--protocol", protocol, "impersonation|obfuscation|overall");
  eval_cmd->add_option("--mode", mode, "head|cosine");
  eval_cmd->add_option("--split", eval_split, "manifest split to evaluate");
  eval_cmd->add_option("--out", out_dir, "output directory")->required();

  auto* pairs_cmd = app.add_subcommand("pairs", "export protocol pairs as CSV");
  pairs_cmd->add_option("--manifest", manifest, "JSON-lines image manifest")->required();
  pairs_cmd->add_option("--protocol", protocol, "impersonation|obfuscation|overall")->required();
  pairs_cmd->add_option("--split", split, "restrict to one split");
  pairs_cmd->add_option("--seed", seed, "subsampling seed");
  auto* max_pairs_opt = pairs_cmd->add_option("--max-pairs", max_pairs, "subsample each split to at most N pairs");
  pairs_cmd->add_option("--out", out_dir, "output CSV file")->required();

  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient check");
  grad_cmd->add_option("--profile", profile, "network profile (tiny|vggface16)");
  grad_cmd->add_option("--tol", tol, "maximum allowed relative error");
  grad_cmd->add_option("--eps", eps, "central-difference step");
  grad_cmd->add_option("--seed", seed, "network and batch seed");
  grad_cmd->add_option("--coords", coords, "coordinates sampled per parameter tensor");

  auto* ablate_cmd = app.add_subcommand("ablate", "train and evaluate a grid of configurations");
  TrainFlags ablate_flags;
  std::string ablate_split = "val";
  ablate_cmd->add_option("--grid", grid, "JSON array of config overrides")->required();
  ablate_cmd->add_option("--manifest", manifest, "JSON-lines image manifest")->required();
  ablate_cmd->add_option("--web-manifest", web_manifest, "records merged by rows with use_web");
  ablate_cmd->add_option("--profile", profile, "network profile (tiny|vggface16)");
  ablate_cmd->add_option("--mode", mode, "head|cosine");
  ablate_cmd->add_option("--eval-split", ablate_split, "split scored for each row");
  ablate_cmd->add_option("--out", out_dir, "output directory")->required();
  ablate_flags.add(*ablate_cmd);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kUsageError;
  }

  try {
    if (train_cmd->parsed()) return run_train(manifest, web_manifest, profile, out_dir, train_flags, out);
    if (eval_cmd->parsed()) return run_eval(checkpoint, manifest, protocol, mode, eval_split, out_dir, out);
    if (pairs_cmd->parsed()) {
      return run_pairs(manifest, protocol, split, seed,
                       max_pairs_opt->count() ? std::optional(max_pairs) : std::nullopt, out_dir, out);
    }
    if (grad_cmd->parsed()) return run_gradcheck(profile, tol, eps, seed, coords, out);
    if (ablate_cmd->parsed()) {
      return run_ablate(grid, manifest, web_manifest, profile, mode, ablate_split, out_dir, ablate_flags, out);
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  err << app.help();
  return kUsageError;
}

}  // namespace dgnet::cli
