#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "oracles.hpp"
#include "rainbow/lattice.hpp"

using rainbow::Vec;
namespace lattice = rainbow::lattice;
namespace payoffs = rainbow::payoffs;
namespace minmax = rainbow::minmax;

namespace {

lattice::MarketSpec market1(double d, double u, double rho, int steps) {
  lattice::MarketSpec m;
  m.assets = 1;
  m.down = {d};
  m.up = {u};
  m.rho = rho;
  m.steps = steps;
  return m;
}

lattice::MarketSpec market2(Vec d, Vec u, double rho, int steps) {
  lattice::MarketSpec m;
  m.assets = 2;
  m.down = std::move(d);
  m.up = std::move(u);
  m.rho = rho;
  m.steps = steps;
  return m;
}

lattice::MarketSpec random_market(std::mt19937_64& gen, int assets, int steps) {
  std::uniform_real_distribution<double> dd(0.70, 0.93), du(1.08, 1.38), dr(0.0, 1.0);
  lattice::MarketSpec m;
  m.assets = assets;
  m.steps = steps;
  for (int j = 0; j < assets; ++j) {
    m.down.push_back(dd(gen));
    m.up.push_back(du(gen));
  }
  double lo = std::max(1.0, *std::max_element(m.down.begin(), m.down.end()) + 0.01);
  double hi = *std::min_element(m.up.begin(), m.up.end()) - 0.01;
  m.rho = lo + (hi - lo) * 0.5 * dr(gen);
  return m;
}

}  // namespace

TEST_CASE("market validation names the violated invariant") {
  auto m = market1(1.1, 1.2, 1.05, 1);
  CHECK_THROWS_AS(m.validate(), rainbow::Error);
  try {
    m.validate();
  } catch (const rainbow::Error& e) {
    CHECK(std::string(e.what()).find("d_j < rho") != std::string::npos);
  }
  CHECK_THROWS_AS(market1(0.9, 1.02, 1.05, 1).validate(), rainbow::Error);
  CHECK_NOTHROW(market1(0.9, 1.2, 1.05, 1).validate());
}

TEST_CASE("bellman step: constants, one and two assets") {
  auto m = market1(0.9, 1.2, 1.0, 1);
  auto constant = [](std::span<const double>) { return 4.2; };
  auto res = lattice::bellman_step(constant, Vec{1.0}, m);
  CHECK(res.value == doctest::Approx(4.2).epsilon(1e-14));
  CHECK(std::fabs(res.gamma[0]) < 1e-12);

  auto call = [](std::span<const double> z) { return std::max(z[0] - 1.0, 0.0); };
  auto res1 = lattice::bellman_step(call, Vec{1.0}, m);
  CHECK(res1.value == doctest::Approx(1.0 / 15.0).epsilon(1e-13));

  // Symmetric two-asset layout: the interest factor is perturbed off the
  // degenerate diagonal, so the pinned value holds to the nudge size.
  auto m2 = market2({0.9, 0.9}, {1.2, 1.2}, 1.0, 1);
  auto fmax = [](std::span<const double> z) { return std::max(z[0], z[1]); };
  auto res2 = lattice::bellman_step(fmax, Vec{1.0, 1.0}, m2);
  CHECK(res2.value == doctest::Approx(1.1).epsilon(1e-7));
  CHECK(res2.perturbed);
}

TEST_CASE("martingale identity holds for every enumerated measure") {
  auto gen = oracle::rng(41);
  for (int trial = 0; trial < 10; ++trial) {
    auto m = random_market(gen, 2, 1);
    std::vector<Vec> centered(4, Vec(2));
    for (int v = 0; v < 4; ++v)
      for (int j = 0; j < 2; ++j)
        centered[v][j] = ((v >> j) & 1 ? m.up[j] : m.down[j]) - m.rho;
    auto set = minmax::ExtremeMeasureSet::build(centered);
    for (const auto& meas : set.measures()) {
      Vec bary(2, 0.0);
      for (std::size_t i = 0; i < meas.indices.size(); ++i)
        for (int j = 0; j < 2; ++j)
          bary[j] += meas.weights[i] * (centered[meas.indices[i]][j] + m.rho);
      CHECK(bary[0] == doctest::Approx(m.rho).epsilon(1e-10));
      CHECK(bary[1] == doctest::Approx(m.rho).epsilon(1e-10));
    }
  }
}

TEST_CASE("european price: zero steps returns the payoff") {
  auto p = payoffs::make_call_on_max(1, 1.0);
  auto res = lattice::price_european(p, Vec{1.3}, market1(0.9, 1.2, 1.05, 0));
  CHECK(res.price == doctest::Approx(0.3).epsilon(1e-15));
}

TEST_CASE("one-asset european equals the classical binomial price") {
  auto gen = oracle::rng(42);
  std::uniform_real_distribution<double> dd(0.75, 0.95), du(1.1, 1.3), dk(0.8, 1.2);
  for (int n = 1; n <= 10; ++n) {
    double d = dd(gen), u = du(gen), K = dk(gen);
    double rho = 1.0 + 0.7 * (std::min(u, 1.12) - 1.0);
    auto m = market1(d, u, rho, n);
    auto call = payoffs::make_call_on_max(1, K);
    auto res = lattice::price_european(call, Vec{1.0}, m);
    double expect = oracle::binomial_price(
        [K](double s) { return std::max(s - K, 0.0); }, 1.0, u, d, rho, n);
    CHECK(res.price == doctest::Approx(expect).epsilon(1e-12));

    auto put = payoffs::make_custom(1, [K](std::span<const double> z) {
      return std::max(K - z[0], 0.0);
    });
    auto res_put = lattice::price_european(put, Vec{1.0}, m);
    double expect_put = oracle::binomial_price(
        [K](double s) { return std::max(K - s, 0.0); }, 1.0, u, d, rho, n);
    CHECK(res_put.price == doctest::Approx(expect_put).epsilon(1e-12));
  }
}

TEST_CASE("engines agree: serial reference, parallel kernel, fast path") {
  auto gen = oracle::rng(43);
  for (int trial = 0; trial < 8; ++trial) {
    auto m = random_market(gen, 2, 4);
    auto p = payoffs::make_call_on_max(2, 1.0);
    Vec z0{1.0, 1.05};
    auto serial = lattice::price_european(p, z0, m, lattice::Engine::serial_reference);
    auto kernel = lattice::price_european(p, z0, m, lattice::Engine::parallel,
                                          lattice::FastPath::off);
    auto fast = lattice::price_european(p, z0, m, lattice::Engine::parallel,
                                        lattice::FastPath::on);
    CHECK(kernel.price == doctest::Approx(serial.price).epsilon(1e-11));
    CHECK(fast.price == doctest::Approx(serial.price).epsilon(1e-10));
    // Node tables agree too.
    for (int step = 0; step < m.steps; ++step)
      for (std::size_t idx = 0; idx < kernel.table(step).value.size(); ++idx)
        CHECK(kernel.table(step).value[idx] ==
              doctest::Approx(serial.table(step).value[idx]).epsilon(1e-10));
  }
}

TEST_CASE("three-asset fast path matches the general engine in linear regions") {
  auto gen = oracle::rng(44);
  std::uniform_real_distribution<double> dd(0.75, 0.9), da(0.05, 0.30), db(0.55, 0.75);
  for (int trial = 0; trial < 4; ++trial) {
    lattice::MarketSpec m;
    m.assets = 3;
    m.steps = 3;
    m.rho = 1.01;
    bool low = trial % 2 == 0;
    for (int j = 0; j < 3; ++j) {
      double d = dd(gen);
      double a = low ? da(gen) : db(gen);  // sum <= 0.9 or >= 1.65 -> alpha123 sign
      m.down.push_back(d);
      m.up.push_back(d + (m.rho - d) / (1.0 - a));
    }
    auto p = payoffs::make_call_on_max(3, 1.0);
    Vec z0{1.0, 1.0, 1.0};
    auto general = lattice::price_european(p, z0, m, lattice::Engine::parallel,
                                           lattice::FastPath::off);
    auto fast = lattice::price_european(p, z0, m, lattice::Engine::parallel,
                                        lattice::FastPath::on);
    CHECK(fast.price == doctest::Approx(general.price).epsilon(1e-10));
  }
}

TEST_CASE("american: zero payoff, dominance over european, no early exercise for calls") {
  auto m = market1(0.9, 1.2, 1.05, 6);
  auto zero = payoffs::make_custom(1, [](std::span<const double>) { return 0.0; });
  CHECK(lattice::price_american(zero, Vec{1.0}, m).price == doctest::Approx(0.0));

  auto call = payoffs::make_call_on_max(1, 1.0);
  auto am = lattice::price_american(call, Vec{1.0}, m);
  auto eu = lattice::price_european(call, Vec{1.0}, m);
  CHECK(am.price >= eu.price - 1e-12);
  for (int step = 0; step <= m.steps; ++step)
    for (std::size_t idx = 0; idx < am.table(step).value.size(); ++idx)
      CHECK(am.table(step).value[idx] >= eu.table(step).value[idx] - 1e-12);
  // Convex payoff, rho >= 1: early exercise never strictly optimal.
  for (int step = 0; step < m.steps; ++step)
    for (auto flag : am.table(step).exercised) CHECK(flag == 0);

  auto gen = oracle::rng(45);
  for (int trial = 0; trial < 5; ++trial) {
    auto m2 = random_market(gen, 2, 3);
    auto p2 = payoffs::make_best_of(2, 1.0);
    auto am2 = lattice::price_american(p2, Vec{1.0, 1.0}, m2);
    auto eu2 = lattice::price_european(p2, Vec{1.0, 1.0}, m2);
    CHECK(am2.price >= eu2.price - 1e-12);
  }
}

TEST_CASE("lower price: equality for one asset, positive intrinsic risk for two") {
  auto m = market1(0.9, 1.2, 1.02, 5);
  auto call = payoffs::make_call_on_max(1, 1.0);
  auto up = lattice::price_european(call, Vec{1.0}, m);
  auto low = lattice::price_lower(call, Vec{1.0}, m);
  CHECK(low.price == doctest::Approx(up.price).epsilon(1e-12));

  auto m2 = market2({0.85, 0.9}, {1.25, 1.2}, 1.01, 3);
  auto p2 = payoffs::make_call_on_max(2, 1.0);
  auto up2 = lattice::price_european(p2, Vec{1.0, 1.0}, m2, lattice::Engine::parallel,
                                     lattice::FastPath::off);
  auto low2 = lattice::price_lower(p2, Vec{1.0, 1.0}, m2);
  CHECK(low2.price <= up2.price + 1e-12);
  CHECK(up2.price - low2.price > 1e-4);  // intrinsic risk of the incomplete market
}

TEST_CASE("path-dependent pricing") {
  auto m = market1(0.9, 1.2, 1.03, 4);

  SUBCASE("terminal-only payoff reduces to the european price") {
    auto call = payoffs::make_call_on_max(1, 1.0);
    auto eu = lattice::price_european(call, Vec{1.0}, m);
    lattice::PathPayoff terminal = [](std::span<const Vec> path) {
      return std::max(path.back()[0] - 1.0, 0.0);
    };
    auto res = lattice::price_path_dependent(terminal, Vec{1.0}, m);
    CHECK(res.price == doctest::Approx(eu.price).epsilon(1e-12));
  }

  SUBCASE("constant path payoff discounts to c / rho^n") {
    lattice::PathPayoff c = [](std::span<const Vec>) { return 2.0; };
    auto res = lattice::price_path_dependent(c, Vec{1.0}, m);
    CHECK(res.price == doctest::Approx(2.0 / std::pow(m.rho, 4)).epsilon(1e-13));
  }

  SUBCASE("lookback matches a grid game-tree oracle") {
    auto m3 = market1(0.9, 1.2, 1.01, 3);
    lattice::PathPayoff lookback = [](std::span<const Vec> path) {
      double peak = 0.0;
      for (const auto& s : path) peak = std::max(peak, s[0]);
      return std::max(peak - path.back()[0], 0.0);
    };
    auto res = lattice::price_path_dependent(lookback, Vec{1.0}, m3);

    // Independent oracle: exhaustive minimax over the path tree, one-step
    // hedges found by grid search.
    std::function<double(std::vector<double>&)> solve = [&](std::vector<double>& path) -> double {
      if (static_cast<int>(path.size()) == m3.steps + 1) {
        double peak = 0.0;
        for (double s : path) peak = std::max(peak, s);
        return std::max(peak - path.back(), 0.0);
      }
      double s = path.back();
      path.push_back(s * m3.up[0]);
      double vu = solve(path);
      path.back() = s * m3.down[0];
      double vd = solve(path);
      path.pop_back();
      std::vector<oracle::Vec> family{{(m3.up[0] - m3.rho) * s}, {(m3.down[0] - m3.rho) * s}};
      oracle::Vec values{vu, vd};
      return oracle::grid_minmax(family, values, 60.0) / m3.rho;
    };
    std::vector<double> path{1.0};
    double expect = solve(path);
    CHECK(res.price == doctest::Approx(expect).epsilon(1e-6));
  }

  SUBCASE("budget guard") {
    auto big = market1(0.9, 1.2, 1.03, 30);
    lattice::PathPayoff c = [](std::span<const Vec>) { return 1.0; };
    try {
      lattice::price_path_dependent(c, Vec{1.0}, big);
      CHECK(false);
    } catch (const rainbow::Error& e) {
      CHECK(e.kind() == rainbow::ErrorKind::resource);
    }
  }
}

TEST_CASE("time-dependent factors price by per-step backward induction") {
  lattice::MarketSpec m;
  m.assets = 1;
  m.steps = 2;
  m.rho = 1.02;
  m.down_steps = {{0.9}, {0.8}};
  m.up_steps = {{1.2}, {1.3}};
  m.down = {0.9};
  m.up = {1.2};
  auto call = payoffs::make_call_on_max(1, 1.0);
  auto res = lattice::price_european(call, Vec{1.0}, m);
  // Hand induction with per-step marginals.
  auto f = [](double s) { return std::max(s - 1.0, 0.0); };
  double p2 = (m.rho - 0.8) / (1.3 - 0.8);
  auto level1 = [&](double s) { return (p2 * f(1.3 * s) + (1 - p2) * f(0.8 * s)) / m.rho; };
  double p1 = (m.rho - 0.9) / (1.2 - 0.9);
  double expect = (p1 * level1(1.2) + (1 - p1) * level1(0.9)) / m.rho;
  CHECK(res.price == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("nonlinear jump maps") {
  SUBCASE("diagonal maps recover the european price") {
    auto m = market1(0.9, 1.2, 1.05, 4);
    lattice::MarketSpec mj = m;
    mj.jump_maps = {[](const Vec& z) { return Vec{1.2 * z[0]}; },
                    [](const Vec& z) { return Vec{0.9 * z[0]}; }};
    auto call = payoffs::make_call_on_max(1, 1.0);
    auto eu = lattice::price_european(call, Vec{1.0}, m);
    auto nl = lattice::price_nonlinear_jumps(call, Vec{1.0}, mj);
    CHECK(nl.price == doctest::Approx(eu.price).epsilon(1e-12));
    CHECK(!nl.warnings.empty());  // k = J+1 completeness note
  }

  SUBCASE("complete two-asset triangle equals the direct expectation") {
    lattice::MarketSpec mj;
    mj.assets = 2;
    mj.steps = 2;
    mj.rho = 1.0;
    Vec a1{1.3, 1.0}, a2{0.9, 1.25}, a3{0.85, 0.8};
    for (const Vec& a : {a1, a2, a3})
      mj.jump_maps.push_back([a](const Vec& z) { return Vec{a[0] * z[0], a[1] * z[1]}; });
    auto p = payoffs::make_call_on_max(2, 1.0);
    auto res = lattice::price_nonlinear_jumps(p, Vec{1.0, 1.0}, mj);

    // Unique risk-neutral weights solve the 3x3 system; then the price is a
    // two-step multinomial expectation.
    std::vector<oracle::Vec> centered{{0.3, 0.0}, {-0.1, 0.25}, {-0.15, -0.2}};
    auto w = oracle::risk_neutral_weights(centered);
    double expect = 0.0;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        Vec factors{1.0, 1.0};
        for (int c : {i, j}) {
          const Vec& arr = c == 0 ? a1 : (c == 1 ? a2 : a3);
          factors[0] *= arr[0];
          factors[1] *= arr[1];
        }
        expect += w[i] * w[j] * p(factors);
      }
    CHECK(res.price == doctest::Approx(expect).epsilon(1e-12));
  }

  SUBCASE("half-space node raises an infeasible error naming the node") {
    lattice::MarketSpec mj;
    mj.assets = 1;
    mj.steps = 1;
    mj.rho = 1.0;
    mj.jump_maps = {[](const Vec& z) { return Vec{1.2 * z[0]}; },
                    [](const Vec& z) { return Vec{1.1 * z[0]}; }};
    auto call = payoffs::make_call_on_max(1, 1.0);
    try {
      lattice::price_nonlinear_jumps(call, Vec{1.0}, mj);
      CHECK(false);
    } catch (const rainbow::Error& e) {
      CHECK(e.kind() == rainbow::ErrorKind::infeasible);
      CHECK(std::string(e.what()).find("node") != std::string::npos);
    }
  }
}

TEST_CASE("transaction costs") {
  auto m = market2({0.88, 0.9}, {1.22, 1.18}, 1.01, 3);
  auto p = payoffs::make_call_on_max(2, 1.0);
  Vec z0{1.0, 1.0};
  double bound = lattice::cost_beta_bound(z0, m);
  CHECK(bound > 0.0);

  SUBCASE("zero cost equals the frictionless price") {
    auto costed = lattice::price_with_costs(p, z0, m, lattice::proportional_costs(0.0));
    auto plain = lattice::price_european(p, z0, m, lattice::Engine::parallel,
                                         lattice::FastPath::off);
    CHECK(costed.price == doctest::Approx(plain.price).epsilon(1e-12));
  }

  SUBCASE("price is non-decreasing in beta under the gate") {
    double b1 = bound / 4.0, b2 = bound / 2.0;
    auto r0 = lattice::price_with_costs(p, z0, m, lattice::proportional_costs(0.0));
    auto r1 = lattice::price_with_costs(p, z0, m, lattice::proportional_costs(b1));
    auto r2 = lattice::price_with_costs(p, z0, m, lattice::proportional_costs(b2));
    CHECK(r1.price >= r0.price - 1e-12);
    CHECK(r2.price >= r1.price - 1e-12);
    CHECK(r2.price > r0.price);
  }

  SUBCASE("gate refusal reports the admissible bound") {
    try {
      lattice::price_with_costs(p, z0, m, lattice::proportional_costs(bound * 1.5));
      CHECK(false);
    } catch (const rainbow::Error& e) {
      CHECK(e.kind() == rainbow::ErrorKind::precondition);
      CHECK(std::string(e.what()).find("bound") != std::string::npos);
    }
  }

  SUBCASE("costed dominance replay never ends below the payoff") {
    double beta = bound / 3.0;
    auto res = lattice::price_with_costs(p, z0, m, lattice::proportional_costs(beta));
    const int paths = 1 << (2 * m.steps);
    int binding = 0;
    for (int code = 0; code < paths; ++code) {
      std::vector<int> path(m.steps);
      int c = code;
      for (int s = 0; s < m.steps; ++s) {
        path[s] = c % 4;
        c /= 4;
      }
      double shortfall = lattice::replay_shortfall(res, path);
      CHECK(shortfall >= -1e-9);
      if (shortfall < 1e-7) ++binding;
    }
    CHECK(binding > 0);
  }
}

TEST_CASE("fixed-fraction costs reduce to an interest rescaling") {
  // Capital model with a fixed fraction kept after each trade: rescale the
  // interest factor in the geometry while discounting at the original rate.
  const double beta_tilde = 0.995;
  auto m = market1(0.9, 1.25, 1.02, 4);
  auto call = payoffs::make_call_on_max(1, 1.0);

  lattice::MarketSpec scaled = m;
  scaled.rho = m.rho / beta_tilde;
  auto priced = lattice::price_european(call, Vec{1.0}, scaled);
  double via_rescale = priced.price * std::pow(scaled.rho / m.rho, m.steps);

  // Direct recursion on the same lattice with the modified centered vectors.
  std::function<double(double, int)> direct = [&](double s, int step) -> double {
    if (step == m.steps) return call(Vec{s});
    double vu = direct(s * m.up[0], step + 1);
    double vd = direct(s * m.down[0], step + 1);
    minmax::VertexValuation val;
    val.vectors = {{(m.up[0] - scaled.rho) * s}, {(m.down[0] - scaled.rho) * s}};
    val.values = {vu, vd};
    return minmax::upper_minmax(val).value / m.rho;
  };
  double expect = direct(1.0, 0);
  CHECK(via_rescale == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("strategy extraction and dominance replay") {
  SUBCASE("zero steps yields an empty strategy") {
    auto m = market1(0.9, 1.2, 1.05, 0);
    auto call = payoffs::make_call_on_max(1, 1.0);
    auto res = lattice::price_european(call, Vec{1.0}, m);
    CHECK(lattice::extract_strategy(res, std::vector<int>{}).empty());
  }

  SUBCASE("one-asset hedge equals the classical delta at every node") {
    auto m = market1(0.9, 1.2, 1.05, 5);
    auto call = payoffs::make_call_on_max(1, 1.0);
    auto res = lattice::price_european(call, Vec{1.0}, m);
    auto f = [](double s) { return std::max(s - 1.0, 0.0); };
    for (int step = 0; step < m.steps; ++step) {
      for (int k = 0; k <= step; ++k) {
        double s = std::pow(m.up[0], k) * std::pow(m.down[0], step - k);
        int counts[1] = {k};
        auto idx = res.node_index(step, counts);
        double delta =
            oracle::binomial_delta(f, s, m.up[0], m.down[0], m.rho, m.steps - step);
        CHECK(res.table(step).gamma[idx] == doctest::Approx(delta).epsilon(1e-10));
      }
    }
  }

  SUBCASE("two-asset dominance replay over every vertex path") {
    auto gen = oracle::rng(46);
    auto m = random_market(gen, 2, 3);
    auto p = payoffs::make_call_on_max(2, 1.0);
    auto res = lattice::price_european(p, Vec{1.0, 1.0}, m, lattice::Engine::parallel,
                                       lattice::FastPath::off);
    int equality_paths = 0;
    for (int code = 0; code < (1 << (2 * m.steps)); ++code) {
      std::vector<int> path(m.steps);
      int c = code;
      for (int s = 0; s < m.steps; ++s) {
        path[s] = c % 4;
        c /= 4;
      }
      double shortfall = lattice::replay_shortfall(res, path);
      CHECK(shortfall >= -1e-9);
      if (std::fabs(shortfall) <= 1e-9) ++equality_paths;
    }
    CHECK(equality_paths > 0);
  }
}

TEST_CASE("operator laws: non-expansion, homogeneity, power eigenfunctions") {
  auto gen = oracle::rng(47);
  auto m = random_market(gen, 2, 1);

  SUBCASE("non-expansion against vertex-wise differences") {
    auto f1 = payoffs::make_call_on_max(2, 1.0);
    auto f2 = payoffs::make_best_of(2, 0.9);
    for (double z1 : {0.8, 1.0, 1.3})
      for (double z2 : {0.7, 1.0, 1.2}) {
        Vec z{z1, z2};
        auto b1 = lattice::bellman_step([&](std::span<const double> w) { return f1(w); }, z, m);
        auto b2 = lattice::bellman_step([&](std::span<const double> w) { return f2(w); }, z, m);
        double worst = 0.0;
        for (int v = 0; v < 4; ++v) {
          Vec w{((v & 1) ? m.up[0] : m.down[0]) * z1, ((v & 2) ? m.up[1] : m.down[1]) * z2};
          worst = std::max(worst, std::fabs(f1(w) - f2(w)));
        }
        CHECK(std::fabs(b1.value - b2.value) <= worst + 1e-12);
      }
  }

  SUBCASE("additive and multiplicative homogeneity") {
    auto base = payoffs::make_call_on_max(2, 1.0);
    Vec z{1.05, 0.95};
    auto f = [&](std::span<const double> w) { return base(w); };
    auto res = lattice::bellman_step(f, z, m);
    auto shifted = lattice::bellman_step(
        [&](std::span<const double> w) { return base(w) + 3.7; }, z, m);
    CHECK(shifted.value == doctest::Approx(res.value + 3.7).epsilon(1e-12));
    auto scaled2 = lattice::bellman_step(
        [&](std::span<const double> w) { return 2.6 * base(w); }, z, m);
    CHECK(scaled2.value == doctest::Approx(2.6 * res.value).epsilon(1e-12));
  }

  SUBCASE("power payoffs are eigenfunctions through n steps") {
    auto mp = random_market(gen, 2, 8);
    auto power = payoffs::make_custom(2, [](std::span<const double> z) {
      return z[0] * z[0] * z[1];
    });
    Vec ones{1.0, 1.0};
    auto lam = lattice::bellman_step([&](std::span<const double> w) { return power(w); }, ones,
                                     mp);
    Vec z0{1.1, 0.92};
    auto res = lattice::price_european(power, z0, mp, lattice::Engine::parallel,
                                       lattice::FastPath::off);
    double expect = std::pow(lam.value / mp.rho, mp.steps) * power(z0);
    CHECK(res.price == doctest::Approx(expect).epsilon(1e-9));
  }
}

TEST_CASE("factor perturbation warning on symmetric layouts") {
  auto m = market2({0.9, 0.9}, {1.2, 1.2}, 1.05, 2);
  auto p = payoffs::make_call_on_max(2, 1.0);
  auto res = lattice::price_european(p, Vec{1.0, 1.0}, m, lattice::Engine::parallel,
                                     lattice::FastPath::off);
  REQUIRE(!res.warnings.empty());
  CHECK(res.warnings.front().find("perturbed") != std::string::npos);
  CHECK(res.market.up[0] != m.up[0]);
  // The nudged price stays within the advertised order of the nudge.
  auto fast = lattice::price_european(p, Vec{1.0, 1.0}, m);  // closed form, exact rho
  CHECK(res.price == doctest::Approx(fast.price).epsilon(1e-6));
}

TEST_CASE("non-convex payoffs carry the vertex-model caveat") {
  auto m = market1(0.9, 1.2, 1.02, 2);
  auto weird = payoffs::make_custom(1, [](std::span<const double> z) {
    return std::min(z[0], 1.0);
  });
  auto res = lattice::price_european(weird, Vec{1.0}, m);
  bool found = false;
  for (const auto& w : res.warnings)
    if (w.find("finite-jump") != std::string::npos) found = true;
  CHECK(found);

  auto convex = payoffs::make_call_on_max(1, 1.0);
  auto res2 = lattice::price_european(convex, Vec{1.0}, m);
  for (const auto& w : res2.warnings) CHECK(w.find("finite-jump") == std::string::npos);
}

TEST_CASE("two-step costed price matches a nested grid game solve") {
  auto m = market1(0.9, 1.25, 1.02, 2);
  const double s0 = 1.0;
  auto payoff = [](double s) { return std::max(s - 1.0, 0.0); };
  double bound = lattice::cost_beta_bound(Vec{s0}, m);
  const double beta = bound / 2.5;
  auto p = payoffs::make_call_on_max(1, 1.0);
  auto res = lattice::price_with_costs(p, Vec{s0}, m, lattice::proportional_costs(beta));

  auto g = [beta](double dgamma, double s) { return beta * std::fabs(dgamma) * s; };
  const double u = m.up[0], d = m.down[0], rho = m.rho;
  // Minimal capital at a time-1 node, carrying hedge v from the first trade.
  auto inner = [&](double s1, double v) {
    auto obj = [&](const oracle::Vec& gam) {
      double up_leg = payoff(u * s1) - gam[0] * (u - rho) * s1 + g(gam[0] - v, s1);
      double dn_leg = payoff(d * s1) - gam[0] * (d - rho) * s1 + g(gam[0] - v, s1);
      return std::max(up_leg, dn_leg);
    };
    return oracle::zoom_min(obj, 1, 40.0) / rho;
  };
  auto outer_obj = [&](const oracle::Vec& gam) {
    double up_leg = inner(u * s0, gam[0]) - gam[0] * (u - rho) * s0 + g(gam[0], s0);
    double dn_leg = inner(d * s0, gam[0]) - gam[0] * (d - rho) * s0 + g(gam[0], s0);
    return std::max(up_leg, dn_leg);
  };
  auto hedge = lattice::extract_strategy(res, std::vector<int>{0, 0});
  oracle::Vec seed{hedge[0][0]};
  double brute = oracle::zoom_min(outer_obj, 1, 40.0, &seed, 13, 10) / rho;
  CHECK(res.price == doctest::Approx(brute).epsilon(1e-5));
}
