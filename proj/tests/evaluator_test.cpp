#include <doctest.h>

#include <cmath>
#include <limits>
#include <set>

#include "dgnet/error.hpp"
#include "dgnet/evaluator.hpp"
#include "dgnet/rng.hpp"
#include "dgnet/synthetic.hpp"

using namespace dgnet;

namespace {

std::set<std::pair<double, double>> rates(const RocCurve& c) {
  std::set<std::pair<double, double>> out;
  for (const auto& p : c.points) out.emplace(p.far, p.gar);
  return out;
}

NetworkSpec small_spec() {
  NetworkSpec s = NetworkSpec::tiny();
  s.input = {1, 8, 8};
  s.stages = {{4, 1}, {4, 1}};
  s.fc = {16, 8};
  s.head = {4, 1};
  return s;
}

}  // namespace

TEST_CASE("gar_at_far examples") {
  const ScoreSet s{{0.9, 0.8, 0.7, 0.4}, {0.6, 0.3, 0.2, 0.1}};
  const auto at25 = gar_at_far(s, 0.25);
  CHECK(at25.gar == 1.0);
  CHECK(at25.threshold == 0.4);
  const auto at20 = gar_at_far(s, 0.2);
  CHECK(at20.gar == 0.75);
  CHECK(at20.threshold > 0.6);
  const ScoreSet separated{{0.7, 0.9}, {0.1, 0.5}};
  for (double far : {0.001, 0.01, 0.1, 0.5, 1.0}) CHECK(gar_at_far(separated, far).gar == 1.0);
  CHECK_THROWS_AS(gar_at_far(s, 0.0), DomainError);
  CHECK_THROWS_AS(gar_at_far(s, 1.5), DomainError);
  CHECK_THROWS_AS(gar_at_far(ScoreSet{{0.5}, {}}, 0.1), DomainError);
  CHECK_THROWS_AS(gar_at_far(ScoreSet{{std::nan("")}, {0.1}}, 0.1), DomainError);
}

TEST_CASE("best_accuracy examples") {
  CHECK(best_accuracy(ScoreSet{{0.8, 0.9}, {0.1, 0.2}}).accuracy == 1.0);
  const auto r = best_accuracy(ScoreSet{{0.8, 0.6}, {0.4, 0.7}});
  CHECK(r.accuracy == 0.75);
  CHECK(r.threshold == 0.6);  // lowest of the tied thresholds 0.6 and 0.8
  CHECK(best_accuracy(ScoreSet{{0.6}, {0.3}}).accuracy == 1.0);
  CHECK(best_accuracy(ScoreSet{{0.8, 0.6}, {0.4, 0.7}}).accuracy_at_half == 0.75);
  CHECK_THROWS_AS(best_accuracy(ScoreSet{{}, {0.3}}), DomainError);
}

TEST_CASE("roc examples") {
  const RocCurve two = roc_curve(ScoreSet{{0.9}, {0.1}});
  CHECK(rates(two).contains({0.0, 1.0}));
  CHECK(std::isinf(two.points.front().threshold));
  CHECK(two.points.front().far == 0.0);
  CHECK(two.points.front().gar == 0.0);
  const RocCurve flat = roc_curve(ScoreSet{{0.5, 0.5}, {0.5}});
  CHECK(rates(flat) == std::set<std::pair<double, double>>{{0.0, 0.0}, {1.0, 1.0}});
  CHECK_THROWS_AS(roc_curve(ScoreSet{{0.5}, {}}), DomainError);
  CHECK(roc_csv(two).rfind("threshold,far,gar\n", 0) == 0);
}

TEST_CASE("metric invariants on random score sets") {
  Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    ScoreSet s;
    const auto ng = rng.integer(1, 40), ni = rng.integer(1, 40);
    for (int i = 0; i < ng; ++i) s.genuine.push_back(std::round(rng.uniform() * 20) / 20);
    for (int i = 0; i < ni; ++i) s.impostor.push_back(std::round(rng.uniform() * 20) / 20);

    const RocCurve c = roc_curve(s);
    for (std::size_t i = 1; i < c.points.size(); ++i) {
      CHECK(c.points[i].far >= c.points[i - 1].far);
      CHECK(c.points[i].gar >= c.points[i - 1].gar);
    }
    CHECK(c.points.back().far == 1.0);
    CHECK(c.points.back().gar == 1.0);

    double prev = -1.0;
    for (double far : {0.01, 0.05, 0.1, 0.3, 0.5, 1.0}) {
      const double g = gar_at_far(s, far).gar;
      CHECK(g >= prev);
      prev = g;
    }
    const double n = static_cast<double>(ng + ni);
    CHECK(best_accuracy(s).accuracy >= static_cast<double>(std::max(ng, ni)) / n);

    ScoreSet t = s;
    for (auto* v : {&t.genuine, &t.impostor})
      for (auto& x : *v) x = std::exp(3 * x) - 7;
    CHECK(rates(roc_curve(t)) == rates(c));
    CHECK(best_accuracy(t).accuracy == best_accuracy(s).accuracy);
    CHECK(gar_at_far(t, 0.1).gar == gar_at_far(s, 0.1).gar);
  }
}

TEST_CASE("metrics report") {
  const ScoreSet s{{0.9, 0.8, 0.7, 0.4}, {0.6, 0.3, 0.2, 0.1}};
  const auto j = metrics_report(s, ScoreMode::head);
  CHECK(j["mode"] == "head");
  CHECK(j["n_genuine"] == 4);
  CHECK(j["n_impostor"] == 4);
  CHECK(j["gar_at"].size() == 3);
  CHECK(j["gar_at"].contains("0.001"));
  CHECK(j["gar_at"].contains("0.01"));
  CHECK(j["gar_at"].contains("0.1"));
  CHECK(j["best_accuracy"] == 0.875);  // threshold 0.7 misses only the genuine 0.4
  CHECK(j.contains("best_threshold"));
  CHECK(j.contains("acc_at_0.5"));
}

TEST_CASE("score_pairs") {
  SyntheticConfig sc;
  sc.identities = 3;
  sc.size = 8;
  const SyntheticCorpus corpus = make_synthetic_corpus(sc);
  ImageStore store({}, {1, 8, 8});
  corpus.install(store);
  const NetworkParams net = build_network(small_spec(), 6);
  const auto pairs = generate_pairs(filter_split(corpus.records, Split::test), Protocol::overall);
  REQUIRE_FALSE(pairs.empty());

  SUBCASE("conservation and determinism") {
    for (ScoreMode m : {ScoreMode::head, ScoreMode::cosine}) {
      const ScoreSet a = score_pairs(net, pairs, store, m);
      CHECK(a.genuine.size() + a.impostor.size() == pairs.size());
      const ScoreSet b = score_pairs(net, pairs, store, m, 3);
      CHECK(a.genuine == b.genuine);
      CHECK(a.impostor == b.impostor);
    }
  }
  SUBCASE("identical inputs score 1 in cosine mode") {
    PairRecord same = pairs.front();
    same.b = same.a;
    same.y = 1;
    const ScoreSet s = score_pairs(net, {same}, store, ScoreMode::cosine);
    REQUIRE(s.genuine.size() == 1);
    CHECK(s.genuine[0] == doctest::Approx(1.0).epsilon(1e-14));
  }
  SUBCASE("head mode scores are probabilities") {
    const ScoreSet s = score_pairs(net, pairs, store, ScoreMode::head);
    for (double v : s.genuine) CHECK((v > 0.0 && v < 1.0));
  }
  CHECK(parse_score_mode("cosine") == ScoreMode::cosine);
  CHECK_FALSE(parse_score_mode("euclid").has_value());
}

TEST_CASE("ablation grid") {
  SyntheticConfig sc;
  sc.identities = 3;
  sc.size = 8;
  sc.web_per_identity = 2;
  const SyntheticCorpus corpus = make_synthetic_corpus(sc);
  ImageStore store({}, {1, 8, 8});
  corpus.install(store);
  AblationData data;
  data.spec = small_spec();
  data.train_records = filter_split(corpus.records, Split::train);
  data.web_records = corpus.web;
  data.eval_pairs = generate_pairs(filter_split(corpus.records, Split::test), Protocol::overall);
  data.images = &store;
  TrainConfig base;
  base.epochs = 1;
  base.batch_size = 8;

  SUBCASE("margin grid") {
    const nlohmann::json grid = nlohmann::json::parse(R"([{"margin":0.1},{"margin":0.5},{"margin":0.6}])");
    const auto rows = run_ablation(grid, data, base);
    REQUIRE(rows.size() == 3);
    for (const auto& r : rows) {
      CHECK(r.ok);
      CHECK(r.gar.size() == 3);
    }
    CHECK(rows[0].config["margin"] == 0.1);
    CHECK(rows[1].config["seed"] == base.seed + 1);
    CHECK(rows[0].fingerprint != rows[1].fingerprint);
    const std::string csv = ablation_csv(rows);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
    CHECK(ablation_json(rows).size() == 3);
  }
  SUBCASE("web rows see more training pairs") {
    const auto rows = run_ablation(nlohmann::json::parse(R"([{"use_web":false},{"use_web":true}])"), data, base);
    REQUIRE(rows.size() == 2);
    CHECK(rows[1].train_pairs > rows[0].train_pairs);
  }
  SUBCASE("failing rows are recorded") {
    const auto rows = run_ablation(nlohmann::json::parse(R"([{"margin":3.0},{"bogus":1},{"margin":0.5}])"), data, base);
    REQUIRE(rows.size() == 3);
    CHECK_FALSE(rows[0].ok);
    CHECK_FALSE(rows[1].ok);
    CHECK(rows[2].ok);
    CHECK(ablation_json(rows)[0]["status"] == "error");
  }
  SUBCASE("empty grid") {
    const auto rows = run_ablation(nlohmann::json::array(), data, base);
    CHECK(rows.empty());
    CHECK(ablation_csv(rows).find('\n') == ablation_csv(rows).size() - 1);
  }
}

TEST_CASE("training pairs are obfuscation plus impersonation") {
  SyntheticConfig sc;
  sc.identities = 2;
  sc.size = 8;
  const auto recs = filter_split(make_synthetic_corpus(sc).records, Split::train);
  const auto pairs = training_pairs(recs);
  CHECK(pairs.size() == generate_pairs(recs, Protocol::obfuscation).size() +
                            generate_pairs(recs, Protocol::impersonation).size());
}
