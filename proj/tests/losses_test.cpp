#include <doctest.h>

#include <cmath>
#include <vector>

#include "dgnet/error.hpp"
#include "dgnet/losses.hpp"
#include "dgnet/rng.hpp"

using namespace dgnet;
using doctest::Approx;

namespace {

using Vec = std::vector<double>;
using Labels = std::vector<int>;

LossConfig unit(double margin = 0.5) {
  LossConfig c;
  c.margin = margin;
  return c;
}

}  // namespace

TEST_CASE("cosine similarity and distance") {
  CHECK(cosine_similarity(Vec{2, 3}, Vec{2, 3}) == Approx(1.0).epsilon(1e-15));
  CHECK(cosine_similarity(Vec{1, 0}, Vec{0, 4}) == 0.0);
  CHECK(cosine_similarity(Vec{1, 0}, Vec{1, 1}) == Approx(0.70710678118654752).epsilon(1e-15));
  CHECK(cosine_distance(Vec{2, 3}, Vec{2, 3}) == Approx(0.0));
  CHECK(cosine_distance(Vec{1, 0}, Vec{0, 4}) == 1.0);
  CHECK(cosine_distance(Vec{0, 0}, Vec{1, 1}) == 1.0);
  CHECK_THROWS_AS(cosine_similarity(Vec{1, 2}, Vec{1, 2, 3}), ShapeError);
  // never above one, even when rounding would overshoot
  const Vec v{0.1, 0.7, 0.3};
  CHECK(cosine_similarity(v, v) <= 1.0);
}

TEST_CASE("contrastive loss examples") {
  CHECK(contrastive_loss(Vec{0.0}, Labels{1}, unit()) == 0.0);
  CHECK(contrastive_loss(Vec{0.7}, Labels{0}, unit()) == 0.0);
  CHECK(contrastive_loss(Vec{0.3}, Labels{1}, unit()) == Approx(0.045).epsilon(1e-14));
  CHECK(contrastive_loss(Vec{0.2, 0.1}, Labels{1, 0}, unit()) == Approx(0.05).epsilon(1e-14));
  CHECK_THROWS_AS(contrastive_loss(Vec{}, Labels{}, unit()), ConfigError);
  CHECK_THROWS_AS(contrastive_loss(Vec{1.2}, Labels{1}, unit()), DomainError);
  CHECK_THROWS_AS(contrastive_loss(Vec{-0.1}, Labels{1}, unit()), DomainError);
  CHECK_THROWS_AS(contrastive_loss(Vec{0.1, 0.2}, Labels{1}, unit()), ShapeError);
  CHECK_THROWS_AS(contrastive_loss(Vec{0.1}, Labels{2}, unit()), DomainError);
}

TEST_CASE("mse and bce examples") {
  CHECK(mse_loss(Vec{1.0}, Labels{1}, unit()) == 0.0);
  CHECK(mse_loss(Vec{0.5}, Labels{0}, unit()) == 0.25);
  CHECK(mse_loss(Vec{0.9, 0.2}, Labels{1, 0}, unit()) == Approx(0.025).epsilon(1e-14));
  CHECK_THROWS_AS(mse_loss(Vec{0.9, 0.2}, Labels{1}, unit()), ShapeError);

  CHECK(bce_loss(Vec{0.5}, Labels{1}, unit()) == Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(bce_loss(Vec{0.5, 0.5}, Labels{1, 0}, unit()) == Approx(std::log(2.0)).epsilon(1e-15));
  const double clamped = bce_loss(Vec{1.0, 0.0}, Labels{1, 0}, unit());
  CHECK(clamped > 0.0);
  CHECK(clamped <= -std::log1p(-1e-7) * (1 + 1e-9));
  CHECK(std::isfinite(bce_loss(Vec{0.0}, Labels{1}, unit())));
  CHECK_THROWS_AS(bce_loss(Vec{0.5}, Labels{1, 0}, unit()), ShapeError);
}

TEST_CASE("class weights") {
  CHECK(class_weights(5, 5) == ClassWeights{1.0, 1.0});
  const ClassWeights w = class_weights(6, 3);
  CHECK(w.pos == 0.75);
  CHECK(w.neg == 1.5);
  CHECK(w.pos * 6 == w.neg * 3);
  CHECK_THROWS_AS(class_weights(4, 0), ConfigError);
  CHECK_THROWS_AS(class_weights(0, 4), ConfigError);
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    const auto np = static_cast<std::size_t>(rng.integer(1, 500));
    const auto nn = static_cast<std::size_t>(rng.integer(1, 500));
    const ClassWeights cw = class_weights(np, nn);
    CHECK(cw.pos * np == Approx(cw.neg * nn).epsilon(1e-14));
    CHECK((cw.pos * np + cw.neg * nn) / (np + nn) == Approx(1.0).epsilon(1e-14));
  }
}

TEST_CASE("weights scale each class") {
  LossConfig c = unit();
  c.weights = {0.75, 1.5};
  CHECK(contrastive_loss(Vec{0.2, 0.1}, Labels{1, 0}, c) == Approx((0.75 * 0.04 + 1.5 * 0.16) / 4).epsilon(1e-14));
  CHECK(mse_loss(Vec{0.9, 0.2}, Labels{1, 0}, c) == Approx((0.75 * 0.01 + 1.5 * 0.04) / 2).epsilon(1e-14));
}

TEST_CASE("total loss") {
  SUBCASE("hand sum of components") {
    const double total = 0.045 + 0.025 + std::log(2.0);
    CHECK(total == Approx(0.763147).epsilon(1e-6));
  }
  SUBCASE("components add up") {
    const Vec d{0.3, 0.1}, p{0.9, 0.2};
    const Labels y{1, 0};
    const auto b = total_loss(d, p, y, unit());
    CHECK(b.total == b.contrastive + b.regression + b.bce);
    CHECK(b.d == d);
    CHECK(b.p == p);
  }
  SUBCASE("contrastive only") {
    LossConfig c = unit();
    c.enable_lr = false;
    c.enable_bce = false;
    const auto b = total_loss(Vec{0.3, 0.1}, Vec{0.9, 0.2}, Labels{1, 0}, c);
    CHECK(b.regression == 0.0);
    CHECK(b.bce == 0.0);
    CHECK(b.total == b.contrastive);
  }
  SUBCASE("perfect batch") {
    const auto b = total_loss(Vec{0.0, 0.8}, Vec{1.0, 0.0}, Labels{1, 0}, unit());
    CHECK(b.total < 1e-6);
  }
  SUBCASE("margin out of range is rejected at config time") {
    CHECK_THROWS_AS(unit(0.0).validate(), ConfigError);
    CHECK_THROWS_AS(unit(1.5).validate(), ConfigError);
    LossConfig c = unit();
    c.weights.neg = 0.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }
}

TEST_CASE("contrastive loss properties") {
  Rng rng(17);
  SUBCASE("zero iff every pair is satisfied") {
    CHECK(contrastive_loss(Vec{0.0, 0.5, 0.9}, Labels{1, 0, 0}, unit()) == 0.0);
    CHECK(contrastive_loss(Vec{1e-9, 0.5}, Labels{1, 0}, unit()) > 0.0);
    CHECK(contrastive_loss(Vec{0.0, 0.5 - 1e-9}, Labels{1, 0}, unit()) > 0.0);
  }
  SUBCASE("monotone in d") {
    for (int i = 0; i < 200; ++i) {
      const double a = rng.uniform(), b = rng.uniform();
      const double lo = std::min(a, b), hi = std::max(a, b);
      CHECK(contrastive_loss(Vec{lo}, Labels{1}, unit()) <= contrastive_loss(Vec{hi}, Labels{1}, unit()));
      CHECK(contrastive_loss(Vec{lo}, Labels{0}, unit()) >= contrastive_loss(Vec{hi}, Labels{0}, unit()));
    }
  }
  SUBCASE("margin zero silences negatives") {
    for (int i = 0; i < 50; ++i) CHECK(contrastive_loss(Vec{rng.uniform()}, Labels{0}, unit(0.0)) == 0.0);
  }
}

TEST_CASE("loss gradient matches central differences, including at the hinge") {
  Rng rng(23);
  LossConfig c = unit();
  c.weights = {0.8, 1.3};
  const double h = 1e-6;
  for (int trial = 0; trial < 50; ++trial) {
    Vec d(4), p(4);
    Labels y{1, 0, 1, 0};
    for (auto& v : d) v = rng.uniform(0.05, 0.95);
    for (auto& v : p) v = rng.uniform(0.05, 0.95);
    d[1] = c.margin + (trial % 2 ? 1e-3 : -1e-3);
    const auto g = total_loss_gradient(d, p, y, c);
    for (std::size_t i = 0; i < 4; ++i) {
      Vec dp = d, dm = d;
      dp[i] += h;
      dm[i] -= h;
      const double nd = (total_loss(dp, p, y, c).total - total_loss(dm, p, y, c).total) / (2 * h);
      CHECK(g.d[i] == Approx(nd).epsilon(1e-6));
      Vec pp = p, pm = p;
      pp[i] += h;
      pm[i] -= h;
      const double np = (total_loss(d, pp, y, c).total - total_loss(d, pm, y, c).total) / (2 * h);
      CHECK(g.p[i] == Approx(np).epsilon(1e-6));
    }
  }
  const auto at_hinge = total_loss_gradient(Vec{0.5}, Vec{0.3}, Labels{0}, c);
  CHECK(at_hinge.d[0] == 0.0);
}
