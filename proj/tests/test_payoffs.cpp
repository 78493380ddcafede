#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "rainbow/payoffs.hpp"

using rainbow::Vec;
namespace payoffs = rainbow::payoffs;

TEST_CASE("named payoffs evaluate the displayed formulas") {
  auto com = payoffs::make_call_on_max(2, 1.0);
  CHECK(com(Vec{1.2, 0.9}) == doctest::Approx(0.2));
  CHECK(com(Vec{0.8, 0.9}) == doctest::Approx(0.0));

  auto spread = payoffs::make_spread(0.1);
  CHECK(spread(Vec{1.0, 1.3}) == doctest::Approx(0.2));
  CHECK(spread(Vec{1.3, 1.0}) == doctest::Approx(0.0));

  auto best = payoffs::make_best_of(2, 1.0);
  CHECK(best(Vec{0.5, 0.7}) == doctest::Approx(1.0));
  CHECK(best(Vec{1.5, 0.7}) == doctest::Approx(1.5));

  auto multi = payoffs::make_multi_strike(Vec{1.0, 1.1});
  CHECK(multi(Vec{1.2, 1.2}) == doctest::Approx(0.2));

  auto port = payoffs::make_portfolio(Vec{0.5, 0.5}, 1.0);
  CHECK(port(Vec{1.4, 1.0}) == doctest::Approx(0.2));
}

TEST_CASE("declared structure flags") {
  CHECK(payoffs::make_best_of(2, 1.0).submodular == true);
  CHECK(payoffs::make_call_on_max(3, 1.0).submodular == true);
  CHECK(payoffs::make_multi_strike(Vec{1, 1, 1}).submodular == true);
  CHECK(payoffs::make_portfolio(Vec{1, 1}, 1.0).submodular == false);
  CHECK(payoffs::make_spread(0.0).submodular == true);
  for (auto kind_convex :
       {payoffs::make_best_of(2, 1.0).convex, payoffs::make_spread(0.1).convex,
        payoffs::make_portfolio(Vec{1, 2}, 1.0).convex})
    CHECK(kind_convex == true);
}

TEST_CASE("all named payoffs pass random midpoint convexity checks") {
  auto gen = oracle::rng(31);
  std::uniform_real_distribution<double> unif(0.2, 2.5);
  std::vector<payoffs::Payoff> named{
      payoffs::make_best_of(2, 1.0), payoffs::make_call_on_max(2, 1.0),
      payoffs::make_multi_strike(Vec{0.9, 1.2}), payoffs::make_portfolio(Vec{0.7, 0.3}, 1.0),
      payoffs::make_spread(0.1)};
  for (const auto& p : named) {
    for (int trial = 0; trial < 200; ++trial) {
      Vec a{unif(gen), unif(gen)}, b{unif(gen), unif(gen)};
      Vec mid{(a[0] + b[0]) / 2, (a[1] + b[1]) / 2};
      CHECK(p(mid) <= (p(a) + p(b)) / 2 + 1e-12);
    }
  }
}

TEST_CASE("sub-modularity sampling: pass, fail and zero slack") {
  payoffs::Box box;
  box.lo = {0.5, 0.5};
  box.hi = {2.0, 2.0};

  auto com = payoffs::make_call_on_max(2, 1.0);
  auto rep = payoffs::check_submodular(com, box, 9);
  CHECK(rep.pass);

  auto product = payoffs::make_custom(2, [](std::span<const double> z) { return z[0] * z[1]; });
  auto rep2 = payoffs::check_submodular(product, box, 9);
  CHECK_FALSE(rep2.pass);
  CHECK(rep2.worst_violation > 0.0);
  CHECK(rep2.coord_i == 0);
  CHECK(rep2.coord_j == 1);

  auto separable = payoffs::make_custom(
      2, [](std::span<const double> z) { return z[0] * z[0] + 3.0 * z[1]; });
  auto rep3 = payoffs::check_submodular(separable, box, 9);
  CHECK(rep3.pass);
  CHECK(rep3.worst_violation <= 1e-12);
}

TEST_CASE("power fit recovers exact members of the family") {
  payoffs::Box box;
  box.lo = {0.8, 0.8};
  box.hi = {1.3, 1.3};
  auto pure = payoffs::make_custom(2, [](std::span<const double> z) {
    return 2.0 * z[0] * z[0] * z[1];
  });
  auto fit = payoffs::power_fit(pure, box, 3);
  CHECK(fit.sup_error < 1e-10);
  CHECK(fit.exponents == std::vector<int>{2, 1});
  CHECK(fit.coeff == doctest::Approx(2.0).epsilon(1e-8));
  CHECK(std::fabs(fit.offset) < 1e-8);

  auto constant = payoffs::make_custom(2, [](std::span<const double>) { return 3.25; });
  auto cfit = payoffs::power_fit(constant, box, 2);
  CHECK(cfit.sup_error < 1e-12);
  CHECK(cfit.exponents == std::vector<int>{0, 0});
  CHECK(payoffs::power_eval(cfit, Vec{1.0, 1.0}) == doctest::Approx(3.25));
}

TEST_CASE("power fit on a narrow box approximates the call on max") {
  // The kink clips one corner of the box only; elsewhere the first asset
  // carries the option, which a power term tracks well.
  payoffs::Box box;
  box.lo = {1.05, 0.90};
  box.hi = {1.15, 1.06};
  auto com = payoffs::make_call_on_max(2, 1.0);
  auto fit = payoffs::power_fit(com, box, 4);
  double range = com(box.hi) - com(box.lo);
  CHECK(fit.sup_error <= 0.10 * range);
  // The certified error really bounds the sampled residuals.
  for (double x : {1.05, 1.08, 1.11, 1.15})
    for (double y : {0.90, 0.95, 1.0, 1.06}) {
      Vec z{x, y};
      CHECK(std::fabs(payoffs::power_eval(fit, z) - com(z)) <= fit.sup_error + 1e-9);
    }
}
