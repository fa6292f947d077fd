#include <catch_amalgamated.hpp>

#include "laneforge/gradcheck.hpp"
#include "laneforge/objectives.hpp"

using namespace laneforge;

namespace {

Tensor<double> randprob(Shape shape, Rng& rng) {
  Tensor<double> t(shape);
  for (long long i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(0.02, 0.98);
  return t;
}

Tensor<double> randlabel(Shape shape, Rng& rng, double lane_rate = 0.3) {
  Tensor<double> t(shape);
  for (long long i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform() < lane_rate ? 1.0 : 0.0;
  return t;
}

}  // namespace

TEST_CASE("weighted cross entropy hand values") {
  LossConfig cfg;
  cfg.alpha = 1;
  cfg.gamma = 0;
  cfg.epsilon = 0;
  Tensor<double> y1(Shape{1, 1, 1}, {1.0});
  SECTION("-ln 0.5 at h = 0.5") {
    Tensor<double> h(Shape{1, 1, 1}, {0.5});
    CHECK(weighted_ce(h, y1, cfg).item() == Catch::Approx(0.6931471805599453).epsilon(1e-12));
  }
  SECTION("saturated prediction costs ~0 via the clamp") {
    Tensor<double> h(Shape{1, 1, 1}, {1.0});
    CHECK(weighted_ce(h, y1, cfg).item() == Catch::Approx(0.0).margin(2e-7));
  }
  SECTION("lane weight doubles the positive term") {
    LossConfig w = cfg;
    w.omega1 = 2.0;
    Tensor<double> h(Shape{1, 1, 1}, {0.5});
    CHECK(weighted_ce(h, y1, w).item() == Catch::Approx(1.3862943611198906).epsilon(1e-12));
  }
  SECTION("shape mismatch is rejected") {
    CHECK_THROWS_AS(
        weighted_ce(Tensor<double>(Shape{1, 2, 2}, 0.5), Tensor<double>(Shape{1, 2, 3}, 1.0), cfg),
        ShapeError);
  }
}

TEST_CASE("poly loss hand values and reductions") {
  Tensor<double> y1(Shape{1, 1, 1}, {1.0});
  SECTION("alpha=1 gamma=1 eps=0 at h=0.5 gives -ln 0.5 + 0.5") {
    LossConfig cfg;
    cfg.alpha = 1;
    cfg.gamma = 1;
    cfg.epsilon = 0;
    Tensor<double> h(Shape{1, 1, 1}, {0.5});
    CHECK(poly_loss(h, y1, cfg).item() == Catch::Approx(1.1931471805599453).epsilon(1e-12));
  }
  SECTION("confident correct prediction vanishes") {
    LossConfig cfg;
    cfg.alpha = 1;
    cfg.gamma = 1;
    cfg.epsilon = 1;
    Tensor<double> h(Shape{1, 1, 1}, {1.0});
    CHECK(poly_loss(h, y1, cfg).item() == Catch::Approx(0.0).margin(1e-6));
  }
  SECTION("reduces to unweighted CE at alpha=1 gamma=0 eps=0 on 100 random batches") {
    LossConfig pl;
    pl.alpha = 1;
    pl.gamma = 0;
    pl.epsilon = 0;
    LossConfig ce;
    ce.alpha = 1;
    ce.gamma = 0;
    ce.epsilon = 0;
    ce.omega1 = ce.omega0 = 1.0;
    for (int s = 0; s < 100; ++s) {
      Rng rng((std::uint64_t)s + 40);
      auto h = randprob(Shape{1, 4, 5}, rng);
      auto y = randlabel(Shape{1, 4, 5}, rng);
      double a = poly_loss(h, y, pl).item();
      double b = weighted_ce(h, y, ce).item();
      REQUIRE(std::abs(a - b) < 1e-12);
    }
  }
  SECTION("negative hyperparameters are rejected") {
    LossConfig bad;
    bad.gamma = -1;
    CHECK_THROWS_AS(poly_loss(Tensor<double>(Shape{1, 1, 1}, 0.5), y1, bad), DomainError);
  }
}

TEST_CASE("poly loss properties") {
  SECTION("nonnegative for nonnegative hyperparameters") {
    for (int s = 0; s < 50; ++s) {
      Rng rng((std::uint64_t)s + 77);
      LossConfig cfg;
      cfg.alpha = rng.uniform(0.0, 2.5);
      cfg.gamma = rng.uniform(0.0, 2.5);
      cfg.epsilon = rng.uniform(0.0, 3.0);
      auto h = randprob(Shape{1, 3, 3}, rng);
      auto y = randlabel(Shape{1, 3, 3}, rng);
      REQUIRE(poly_loss(h, y, cfg).item() >= 0.0);
    }
  }
  SECTION("per-pixel loss decreases in h for y=1 and increases for y=0") {
    LossConfig cfg;
    cfg.alpha = 1.2;
    cfg.gamma = 0.8;
    cfg.epsilon = 1.5;
    Tensor<double> y1(Shape{1, 1, 1}, {1.0});
    Tensor<double> y0(Shape{1, 1, 1}, {0.0});
    double prev1 = 1e300, prev0 = -1e300;
    for (double h = 0.05; h < 0.99; h += 0.05) {
      double l1 = poly_loss(Tensor<double>(Shape{1, 1, 1}, {h}), y1, cfg).item();
      double l0 = poly_loss(Tensor<double>(Shape{1, 1, 1}, {h}), y0, cfg).item();
      REQUIRE(l1 < prev1);
      REQUIRE(l0 > prev0);
      prev1 = l1;
      prev0 = l0;
    }
  }
}

TEST_CASE("focal loss") {
  Tensor<double> y1(Shape{1, 1, 1}, {1.0});
  SECTION("eps=0 reduces to CE on 100 random batches") {
    LossConfig ce;
    ce.omega1 = ce.omega0 = 1.0;
    for (int s = 0; s < 100; ++s) {
      Rng rng((std::uint64_t)s + 4000);
      auto h = randprob(Shape{1, 3, 4}, rng);
      auto y = randlabel(Shape{1, 3, 4}, rng);
      REQUIRE(std::abs(focal_loss(h, y, 1.0, 0.0).item() - weighted_ce(h, y, ce).item()) < 1e-12);
    }
  }
  SECTION("alpha=1 eps=2 at Q=0.9") {
    Tensor<double> h(Shape{1, 1, 1}, {0.9});
    CHECK(focal_loss(h, y1, 1.0, 2.0).item() == Catch::Approx(0.0010536051565782628).epsilon(1e-9));
  }
  SECTION("perfect prediction vanishes") {
    Tensor<double> h(Shape{1, 1, 1}, {1.0});
    CHECK(focal_loss(h, y1, 1.0, 2.0).item() == Catch::Approx(0.0).margin(1e-12));
  }
}

TEST_CASE("taylor truncation of the focal loss") {
  SECTION("three terms at Q=0.9") {
    CHECK(fl_taylor_truncated(0.9, 0.0, 3, {}) == Catch::Approx(0.10533333333333333).epsilon(1e-12));
  }
  SECTION("twelve terms approximate -ln Q") {
    CHECK(std::abs(fl_taylor_truncated(0.9, 0.0, 12, {}) - (-std::log(0.9))) < 1e-9);
  }
  SECTION("N=1 perturbed series plus the exact tail reproduces the simplified poly loss") {
    for (double q : {0.3, 0.6, 0.9}) {
      for (double eps : {0.0, 1.0, 2.0}) {
        double gamma = 0.7;
        double lead = fl_taylor_truncated(q, eps, 1, {gamma});
        double exact_fl = -std::pow(1.0 - q, eps) * std::log(q);
        double tail = exact_fl - std::pow(1.0 - q, 1.0 + eps);  // sum of j >= 2 terms
        double lhs = lead + tail;
        double rhs = poly_loss_scalar(q, 1.0, gamma, eps);
        REQUIRE(std::abs(lhs - rhs) < 1e-12);
      }
    }
  }
  SECTION("Lagrange-style remainder bound") {
    for (int s = 0; s < 200; ++s) {
      Rng rng((std::uint64_t)s + 31);
      double q = rng.uniform(0.15, 0.95);
      int n = (int)rng.uniform_int(1, 20);
      double err = std::abs(fl_taylor_truncated(q, 0.0, n, {}) - (-std::log(q)));
      double bound = std::pow(1.0 - q, n + 1) / ((n + 1) * q);
      // the analytic bound can drop below the rounding noise of the sum
      REQUIRE(err < bound + 1e-15);
    }
  }
  SECTION("domain errors") {
    CHECK_THROWS_AS(fl_taylor_truncated(0.0, 0.0, 3, {}), DomainError);
    CHECK_THROWS_AS(fl_taylor_truncated(1.0, 0.0, 3, {}), DomainError);
  }
}

TEST_CASE("loss gradients pass finite differences through the probabilities") {
  for (int s = 0; s < 20; ++s) {
    Rng rng((std::uint64_t)s + 600);
    auto h = randprob(Shape{1, 3, 3}, rng);
    Tensor<double> y(Shape{1, 3, 3});
    for (long long i = 0; i < y.size(); ++i) y.data()[i] = rng.uniform() < 0.4 ? 1.0 : 0.0;
    LossConfig cfg;
    cfg.alpha = 1.3;
    cfg.gamma = 0.9;
    cfg.epsilon = 1.0;
    cfg.omega1 = 1.8;
    cfg.omega0 = 0.4;
    auto rep_pl = finite_difference_check<double>(
        [&](const Tensor<double>& v) { return poly_loss(v, y, cfg); }, h);
    REQUIRE(rep_pl.max_rel_err < 1e-4);
    auto rep_ce = finite_difference_check<double>(
        [&](const Tensor<double>& v) { return weighted_ce(v, y, cfg); }, h);
    REQUIRE(rep_ce.max_rel_err < 1e-4);
    auto rep_fl = finite_difference_check<double>(
        [&](const Tensor<double>& v) { return focal_loss(v, y, 1.1, 2.0); }, h);
    REQUIRE(rep_fl.max_rel_err < 1e-4);
  }
}

TEST_CASE("loss gradients flow through logits") {
  Rng rng(999);
  Tensor<double> logits(Shape{2, 3, 4});
  for (long long i = 0; i < logits.size(); ++i) logits.data()[i] = rng.uniform(-2, 2);
  Tensor<double> y(Shape{1, 3, 4});
  for (long long i = 0; i < y.size(); ++i) y.data()[i] = rng.uniform() < 0.3 ? 1.0 : 0.0;
  LossConfig cfg;
  auto rep = finite_difference_check<double>(
      [&](const Tensor<double>& v) {
        auto lane = narrow_channels(softmax_channels(v), 1, 1);
        return poly_loss(lane, y, cfg);
      },
      logits);
  CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("inverse frequency weights normalize to mean one") {
  auto [w1, w0] = inverse_frequency_weights(0.04);
  CHECK((w1 + w0) / 2.0 == Catch::Approx(1.0).epsilon(1e-12));
  CHECK(w1 > w0);
  CHECK_THROWS_AS(inverse_frequency_weights(0.0), DomainError);
}
