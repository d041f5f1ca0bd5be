#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "absgd/errors.hpp"
#include "absgd/losses.hpp"
#include "absgd/math.hpp"
#include "absgd/rng.hpp"

using namespace absgd;

namespace {

// independent loss oracles computed from explicit probabilities (safe at
// test scale where nothing overflows)
double naive_ce(const std::vector<double>& logits, int y) {
  double z = 0.0;
  for (double l : logits) z += std::exp(l);
  return -std::log(std::exp(logits[y]) / z);
}

std::vector<double> fd_logit_grad(const LossContext& ctx, std::vector<double> logits,
                                  int y) {
  const double h = 1e-6;
  std::vector<double> g(logits.size());
  for (std::size_t k = 0; k < logits.size(); ++k) {
    logits[k] += h;
    const double up = ctx.value(logits, y);
    logits[k] -= 2 * h;
    const double down = ctx.value(logits, y);
    logits[k] += h;
    g[k] = (up - down) / (2 * h);
  }
  return g;
}

}  // namespace

TEST_CASE("cross entropy examples") {
  const std::vector<double> uniform(10, 0.3);
  CHECK(ce_loss(uniform, 4) == doctest::Approx(std::log(10.0)).epsilon(1e-12));
  CHECK(ce_loss(std::vector<double>{1.0, 0.0}, 0) ==
        doctest::Approx(std::log(1.0 + std::exp(-1.0))).epsilon(1e-12));
  CHECK(ce_loss(std::vector<double>{1.0, 0.0}, 0) == doctest::Approx(0.313262).epsilon(1e-5));
  const double extreme = ce_loss(std::vector<double>{1000.0, 0.0}, 0);
  CHECK(std::isfinite(extreme));
  CHECK(extreme == doctest::Approx(0.0).epsilon(1e-12));
  CHECK_THROWS_AS(ce_loss(std::vector<double>{0.0, 0.0}, 2), ValidationError);
  CHECK_THROWS_AS(ce_loss(std::vector<double>{0.0, 0.0}, -1), ValidationError);
}

TEST_CASE("cross entropy matches the naive oracle") {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> logits(2 + rng.next_index(8));
    for (double& l : logits) l = 3.0 * rng.next_gaussian();
    const int y = static_cast<int>(rng.next_index(logits.size()));
    CHECK(ce_loss(logits, y) == doctest::Approx(naive_ce(logits, y)).epsilon(1e-12));
    CHECK(ce_loss(logits, y) >= 0.0);
  }
}

TEST_CASE("focal loss examples") {
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> logits(3);
    for (double& l : logits) l = 2.0 * rng.next_gaussian();
    const int y = static_cast<int>(rng.next_index(3));
    CHECK(focal_loss(logits, y, 0.0) == doctest::Approx(ce_loss(logits, y)).epsilon(1e-12));
    // focal <= ce pointwise for gamma > 0
    CHECK(focal_loss(logits, y, 2.0) <= ce_loss(logits, y) + 1e-15);
  }
  CHECK(focal_loss(std::vector<double>{1000.0, 0.0}, 0, 2.0) ==
        doctest::Approx(0.0).epsilon(1e-12));
  // equal two-class logits put p_t = 0.5
  CHECK(focal_loss(std::vector<double>{1.0, 1.0}, 0, 2.0) ==
        doctest::Approx(0.25 * std::log(2.0)).epsilon(1e-12));
  CHECK(focal_loss(std::vector<double>{1.0, 1.0}, 0, 2.0) ==
        doctest::Approx(0.173287).epsilon(1e-5));
}

TEST_CASE("ldam loss examples") {
  const std::vector<double> logits{1.0, 0.0};
  const std::vector<double> zero{0.0, 0.0};
  CHECK(ldam_loss(logits, 0, zero, 1.0) == doctest::Approx(ce_loss(logits, 0)).epsilon(1e-12));
  const std::vector<double> m{0.5, 0.0};
  CHECK(ldam_loss(logits, 0, m, 1.0) ==
        doctest::Approx(std::log(1.0 + std::exp(-0.5))).epsilon(1e-12));
  CHECK(ldam_loss(logits, 0, m, 1.0) == doctest::Approx(0.474077).epsilon(1e-5));
  // loss grows monotonically with the true-class margin
  double prev = 0.0;
  for (double margin : {0.0, 0.5, 1.0, 2.0, 5.0}) {
    const double l = ldam_loss(logits, 0, std::vector<double>{margin, 0.0}, 1.0);
    CHECK(l >= prev);
    prev = l;
  }
}

TEST_CASE("ldam margins") {
  const std::vector<long> equal{100, 100, 100};
  for (double m : ldam_margins(equal, 0.5, 0.25))
    CHECK(m == doctest::Approx(0.5).epsilon(1e-12));
  const std::vector<double> m = ldam_margins(std::vector<long>{1, 16}, 0.5, 0.25);
  CHECK(m[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(m[1] == doctest::Approx(0.25).epsilon(1e-12));  // 16^0.25 = 2
  for (double v : ldam_margins(std::vector<long>{3, 999}, 0.5, 0.0))
    CHECK(v == doctest::Approx(0.5).epsilon(1e-12));
  CHECK_THROWS_AS(ldam_margins(std::vector<long>{0, 5}, 0.5, 0.25), ValidationError);
}

TEST_CASE("class-balanced weights") {
  for (double w : cb_class_weights(std::vector<long>{7, 20, 3}, 0.0))
    CHECK(w == doctest::Approx(1.0).epsilon(1e-12));
  for (double w : cb_class_weights(std::vector<long>{50, 50, 50, 50}, 0.99))
    CHECK(w == doctest::Approx(1.0).epsilon(1e-12));

  const double beta = 0.999;
  const std::vector<long> counts{10, 1000};
  const std::vector<double> w = cb_class_weights(counts, beta);
  // direct effective-number oracle, normalized to sum C
  const double r0 = (1.0 - beta) / (1.0 - std::pow(beta, 10.0));
  const double r1 = (1.0 - beta) / (1.0 - std::pow(beta, 1000.0));
  CHECK(w[0] == doctest::Approx(2.0 * r0 / (r0 + r1)).epsilon(1e-12));
  CHECK(w[1] == doctest::Approx(2.0 * r1 / (r0 + r1)).epsilon(1e-12));
  CHECK(w[0] > w[1]);  // minority above majority
  CHECK(w[0] + w[1] == doctest::Approx(2.0).epsilon(1e-12));

  // nonincreasing in class count
  const std::vector<double> many = cb_class_weights(std::vector<long>{1, 5, 50, 500}, 0.99);
  for (std::size_t i = 1; i < many.size(); ++i) CHECK(many[i] <= many[i - 1] + 1e-15);

  CHECK_THROWS_AS(cb_class_weights(counts, 1.0), ValidationError);
}

TEST_CASE("deferred class weighting") {
  LossSpec spec;
  spec.class_weighting = ClassWeighting::ClassBalanced;
  spec.beta_cb = 0.999;
  spec.defer_epoch = 160;
  const std::vector<long> counts{1000, 10};
  const std::vector<double> logits{0.3, -0.2};

  const double base = ce_loss(logits, 1);
  CHECK(effective_loss(spec, 1, counts, logits, 1) == doctest::Approx(base).epsilon(1e-12));
  CHECK(effective_loss(spec, 159, counts, logits, 1) == doctest::Approx(base).epsilon(1e-12));
  const std::vector<double> cw = cb_class_weights(counts, 0.999);
  CHECK(effective_loss(spec, 160, counts, logits, 1) ==
        doctest::Approx(cw[1] * base).epsilon(1e-12));

  LossSpec expl;
  expl.class_weighting = ClassWeighting::Explicit;
  expl.explicit_weights = {0.5, 1.5};
  CHECK(effective_loss(expl, 1, counts, logits, 1) ==
        doctest::Approx(1.5 * base).epsilon(1e-12));

  LossSpec none;
  CHECK(effective_loss(none, 1, counts, logits, 1) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("all base losses are shift stable") {
  Rng rng(10);
  const std::vector<double> margins{0.5, 0.25, 0.1};
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> logits(3);
    for (double& l : logits) l = 4.0 * rng.next_gaussian();
    const int y = static_cast<int>(rng.next_index(3));
    const double c = 50.0 * rng.next_gaussian();
    std::vector<double> shifted = logits;
    for (double& l : shifted) l += c;
    CHECK(ce_loss(shifted, y) == doctest::Approx(ce_loss(logits, y)).epsilon(1e-10));
    CHECK(focal_loss(shifted, y, 2.0) ==
          doctest::Approx(focal_loss(logits, y, 2.0)).epsilon(1e-10));
    CHECK(ldam_loss(shifted, y, margins, 30.0) ==
          doctest::Approx(ldam_loss(logits, y, margins, 30.0)).epsilon(1e-10));
  }
}

TEST_CASE("LossContext value matches the standalone functions") {
  const std::vector<long> counts{100, 20, 4};
  const std::vector<double> logits{0.4, -1.2, 0.9};

  LossSpec ce;
  CHECK(LossContext::make(ce, 1, counts).value(logits, 2) ==
        doctest::Approx(ce_loss(logits, 2)).epsilon(1e-14));

  LossSpec focal;
  focal.base = BaseLoss::Focal;
  CHECK(LossContext::make(focal, 1, counts).value(logits, 1) ==
        doctest::Approx(focal_loss(logits, 1, 2.0)).epsilon(1e-14));

  LossSpec ldam;
  ldam.base = BaseLoss::Ldam;
  const std::vector<double> margins = ldam_margins(counts, 0.5, 0.25);
  CHECK(LossContext::make(ldam, 1, counts).value(logits, 0) ==
        doctest::Approx(ldam_loss(logits, 0, margins, 30.0)).epsilon(1e-14));
}

TEST_CASE("LossContext analytic logit gradients match finite differences") {
  Rng rng(12);
  const std::vector<long> counts{100, 20, 4};
  std::vector<LossSpec> specs(4);
  specs[1].base = BaseLoss::Focal;
  specs[2].base = BaseLoss::Ldam;
  specs[3].class_weighting = ClassWeighting::ClassBalanced;  // CB-CE
  for (const LossSpec& spec : specs) {
    const LossContext ctx = LossContext::make(spec, 1, counts);
    for (int trial = 0; trial < 25; ++trial) {
      std::vector<double> logits(3);
      for (double& l : logits) l = 2.0 * rng.next_gaussian();
      const int y = static_cast<int>(rng.next_index(3));
      std::vector<double> grad(3);
      const double value = ctx.value_and_grad(logits, y, grad);
      CHECK(value == doctest::Approx(ctx.value(logits, y)).epsilon(1e-13));
      const std::vector<double> fd = fd_logit_grad(ctx, logits, y);
      for (std::size_t k = 0; k < 3; ++k)
        CHECK(grad[k] == doctest::Approx(fd[k]).epsilon(5e-6).scale(1.0));
    }
  }
}
