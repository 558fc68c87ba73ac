#include <doctest.h>

#include <sstream>

#include <json.hpp>

#include "dgnet/cli.hpp"
#include "dgnet/synthetic.hpp"
#include "support.hpp"

using namespace dgnet;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

nlohmann::json read_json(const std::filesystem::path& p) { return nlohmann::json::parse(testing::slurp(p)); }

}  // namespace

TEST_CASE("usage errors exit 2") {
  const Run unknown = run({"frobnicate"});
  CHECK(unknown.code == 2);
  CHECK(unknown.err.find("train") != std::string::npos);
  CHECK(run({}).code == 2);
  CHECK(run({"gradcheck", "--bogus"}).code == 2);
  CHECK(run({"pairs", "--protocol", "overall", "--out", "x.csv"}).code == 2);  // missing --manifest
  CHECK(run({"gradcheck", "--profile", "resnet"}).code == 2);
  CHECK(run({"--help"}).code == 0);
}

TEST_CASE("gradcheck subcommand") {
  const Run r = run({"gradcheck", "--tol", "1e-4", "--coords", "4"});
  CHECK(r.code == 0);
  CHECK(r.out.find("max relative error") != std::string::npos);
}

TEST_CASE("pipeline through the command line") {
  testing::TempDir dir("cli");
  SyntheticConfig sc;
  sc.identities = 3;
  sc.web_per_identity = 1;
  make_synthetic_corpus(sc).write(dir.path());
  const std::string manifest = (dir / "manifest.jsonl").string();

  SUBCASE("pairs csv") {
    const auto csv = dir / "p.csv";
    const Run r = run({"pairs", "--manifest", manifest, "--protocol", "obfuscation", "--out", csv.string()});
    REQUIRE(r.code == 0);
    const std::string text = testing::slurp(csv);
    CHECK(text.rfind("identity,path_a,path_b,label,protocol\n", 0) == 0);
    CHECK(text.find(",1,obfuscation\n") != std::string::npos);
    CHECK(run({"pairs", "--manifest", manifest, "--protocol", "sideways", "--out", csv.string()}).code == 2);
  }
  SUBCASE("missing manifest is a runtime error") {
    CHECK(run({"pairs", "--manifest", (dir / "nope.jsonl").string(), "--protocol", "overall", "--out",
               (dir / "p.csv").string()}).code == 1);
  }
  SUBCASE("train then eval") {
    testing::spit(dir / "cfg.json", R"({"epochs": 5, "batch_size": 4, "margin": 0.6})");
    const auto out = dir / "run";
    const Run t = run({"train", "--manifest", manifest, "--web-manifest", (dir / "web.jsonl").string(), "--profile",
                       "tiny", "--out", out.string(), "--config", (dir / "cfg.json").string(), "--epochs", "1",
                       "--seed", "3"});
    REQUIRE_MESSAGE(t.code == 0, t.err);
    const auto cfg = read_json(out / "config.json");
    CHECK(cfg["train"]["epochs"] == 1);       // flag beats file
    CHECK(cfg["train"]["margin"] == 0.6);     // file beats default
    CHECK(cfg["train"]["batch_size"] == 4);
    CHECK(cfg["train"]["seed"] == 3);
    CHECK(std::filesystem::exists(out / "model.ckpt"));
    CHECK(testing::slurp(out / "train_log.csv").rfind("epoch,l_c,l_r,l_bce,l_total,train_acc,seconds\n", 0) == 0);

    const auto ev = dir / "eval";
    const Run e = run({"eval", "--checkpoint", (out / "model.ckpt").string(), "--manifest", manifest, "--protocol",
                       "overall", "--mode", "cosine", "--out", ev.string()});
    REQUIRE_MESSAGE(e.code == 0, e.err);
    const auto metrics = read_json(ev / "metrics.json");
    CHECK(metrics["mode"] == "cosine");
    CHECK(metrics["gar_at"].size() == 3);
    CHECK(testing::slurp(ev / "roc.csv").rfind("threshold,far,gar\n", 0) == 0);
    CHECK(read_json(ev / "config.json")["protocol"] == "overall");
  }
  SUBCASE("bad config values") {
    CHECK(run({"train", "--manifest", manifest, "--out", (dir / "r").string(), "--margin", "2"}).code == 2);
    testing::spit(dir / "bad.json", R"({"momentum": 0.9})");
    CHECK(run({"train", "--manifest", manifest, "--out", (dir / "r").string(), "--config",
               (dir / "bad.json").string()}).code == 2);
  }
  SUBCASE("ablate") {
    testing::spit(dir / "grid.json", R"([{"name":"m01","margin":0.1},{"name":"web","use_web":true}])");
    const auto out = dir / "abl";
    const Run r = run({"ablate", "--grid", (dir / "grid.json").string(), "--manifest", manifest, "--web-manifest",
                       (dir / "web.jsonl").string(), "--out", out.string(), "--epochs", "1", "--eval-split", "test"});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(read_json(out / "ablation.json").size() == 2);
    CHECK(testing::slurp(out / "ablation.csv").find("m01") != std::string::npos);
    CHECK(std::filesystem::exists(out / "config.json"));
  }
}
