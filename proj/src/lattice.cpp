#include "rainbow/lattice.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <array>
#include <sstream>

#include "rainbow/submodular.hpp"

namespace rainbow::lattice {

double MarketSpec::down_at(int step, int asset) const {
  return time_dependent() ? down_steps.at(step).at(asset) : down.at(asset);
}

double MarketSpec::up_at(int step, int asset) const {
  return time_dependent() ? up_steps.at(step).at(asset) : up.at(asset);
}

void MarketSpec::validate() const {
  if (assets < 1) throw validation_error("market: assets must be >= 1");
  if (assets > 4) throw validation_error("market: at most 4 assets are supported");
  if (steps < 0) throw validation_error("market: steps must be >= 0");
  if (!(rho >= 1.0)) throw validation_error("market: requires rho >= 1");
  if (!jump_maps.empty()) return;  // factor invariants do not apply to maps
  auto check_pair = [&](double d, double u, int j, int step) {
    std::ostringstream tag;
    tag << "asset " << (j + 1);
    if (step >= 0) tag << " step " << step;
    if (!(d > 0.0))
      throw validation_error("market: requires d_j > 0 (" + tag.str() + ")");
    if (!(d < rho))
      throw validation_error("market: requires d_j < rho (" + tag.str() + ")");
    if (!(rho < u))
      throw validation_error("market: requires u_j > rho (" + tag.str() + ")");
  };
  if (time_dependent()) {
    if (static_cast<int>(down_steps.size()) != steps ||
        static_cast<int>(up_steps.size()) != steps)
      throw validation_error("market: per-step factors must cover every step");
    for (int s = 0; s < steps; ++s) {
      if (static_cast<int>(down_steps[s].size()) != assets ||
          static_cast<int>(up_steps[s].size()) != assets)
        throw validation_error("market: per-step factor rows must have one entry per asset");
      for (int j = 0; j < assets; ++j) check_pair(down_steps[s][j], up_steps[s][j], j, s);
    }
  } else {
    if (static_cast<int>(down.size()) != assets || static_cast<int>(up.size()) != assets)
      throw validation_error("market: need one (d_j, u_j) pair per asset");
    for (int j = 0; j < assets; ++j) check_pair(down[j], up[j], j, -1);
  }
}

CostModel proportional_costs(double beta) {
  CostModel c;
  c.beta = beta;
  c.cost = [beta](std::span<const double> dg, std::span<const double> z) {
    double s = 0.0;
    for (std::size_t j = 0; j < dg.size(); ++j) s += std::fabs(dg[j]) * z[j];
    return beta * s;
  };
  return c;
}

namespace {

void check_prices(const Vec& z0, const MarketSpec& m) {
  if (static_cast<int>(z0.size()) != m.assets)
    throw validation_error("initial prices must have one entry per asset");
  for (double v : z0)
    if (!(v > 0.0)) throw validation_error("initial prices must be strictly positive");
}

std::vector<Vec> vertex_factor_list(const MarketSpec& m, int step) {
  const int J = m.assets;
  std::vector<Vec> out(std::size_t(1) << J, Vec(J));
  for (std::size_t v = 0; v < out.size(); ++v)
    for (int j = 0; j < J; ++j)
      out[v][j] = (v >> j) & 1 ? m.up_at(step, j) : m.down_at(step, j);
  return out;
}

std::vector<Vec> centered_vertices(const MarketSpec& m, int step, double rho) {
  auto out = vertex_factor_list(m, step);
  for (auto& v : out)
    for (double& x : v) x -= rho;
  return out;
}

struct MeasureBuild {
  minmax::ExtremeMeasureSet set;
  MarketSpec market;  // factors possibly nudged off a degenerate layout
  bool perturbed = false;
};

// Nudges every factor by a distinct relative amount. A plain interest nudge
// cannot fix equal-factor layouts (rho 1 moves along the diagonal the
// degenerate pair spans), so the factors themselves move.
MarketSpec nudge_factors(const MarketSpec& m, double eps) {
  MarketSpec out = m;
  auto bump = [&](std::vector<double>& d, std::vector<double>& u) {
    for (int j = 0; j < m.assets; ++j) {
      d[j] *= 1.0 - eps * (j + 1);
      u[j] *= 1.0 + eps * (m.assets + j + 1);
    }
  };
  if (out.time_dependent()) {
    for (int s = 0; s < out.steps; ++s) bump(out.down_steps[s], out.up_steps[s]);
  } else {
    bump(out.down, out.up);
  }
  return out;
}

MeasureBuild build_measures(const MarketSpec& m, int step) {
  MarketSpec current = m;
  for (int attempt = 0;; ++attempt) {
    try {
      auto set = minmax::ExtremeMeasureSet::build(centered_vertices(current, step, current.rho));
      return {std::move(set), std::move(current), attempt > 0};
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::degenerate || attempt >= 3) throw;
      current = nudge_factors(m, 1e-9 * std::pow(10.0, attempt));
    }
  }
}

// Recombining node bookkeeping: a node at step m is the vector of per-asset
// up-move counts, encoded in mixed radix m+1.
struct Grid {
  int J = 0, n = 0;
  Vec z0;
  std::vector<std::vector<double>> pow_u, pow_d;  // [asset][count]

  Grid(const MarketSpec& m, const Vec& start) : J(m.assets), n(m.steps), z0(start) {
    pow_u.assign(J, std::vector<double>(n + 1, 1.0));
    pow_d.assign(J, std::vector<double>(n + 1, 1.0));
    for (int j = 0; j < J; ++j)
      for (int k = 1; k <= n; ++k) {
        pow_u[j][k] = pow_u[j][k - 1] * m.up[j];
        pow_d[j][k] = pow_d[j][k - 1] * m.down[j];
      }
  }

  std::size_t count(int step) const {
    std::size_t c = 1;
    for (int j = 0; j < J; ++j) c *= static_cast<std::size_t>(step + 1);
    return c;
  }

  void decode(std::size_t idx, int step, int* counts) const {
    const std::size_t base = static_cast<std::size_t>(step + 1);
    for (int j = 0; j < J; ++j) {
      counts[j] = static_cast<int>(idx % base);
      idx /= base;
    }
  }

  std::size_t encode(const int* counts, int step) const {
    const std::size_t base = static_cast<std::size_t>(step + 1);
    std::size_t idx = 0;
    for (int j = J - 1; j >= 0; --j) idx = idx * base + static_cast<std::size_t>(counts[j]);
    return idx;
  }

  std::size_t child(const int* counts, int step, int vertex) const {
    const std::size_t base = static_cast<std::size_t>(step + 2);
    std::size_t idx = 0;
    for (int j = J - 1; j >= 0; --j)
      idx = idx * base + static_cast<std::size_t>(counts[j] + ((vertex >> j) & 1));
    return idx;
  }

  void prices(int step, const int* counts, double* z) const {
    for (int j = 0; j < J; ++j)
      z[j] = z0[j] * pow_u[j][counts[j]] * pow_d[j][step - counts[j]];
  }
};

enum class Variant { european, american, lower };

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::european: return "european";
    case Variant::american: return "american";
    case Variant::lower: return "lower";
  }
  return "";
}

// Per-run fast-path selection.
struct FastPlan {
  bool use_two_color = false;
  bool use_three_color = false;
  submodular::TwoColorCoefficients two;
  // three-color linear form: support vertex ids and weights
  std::array<int, 4> support{};
  std::array<double, 4> weights{};
  std::vector<Vec> loadings;  // hedge loadings of the support simplex
};

bool payoff_fast_eligible(const payoffs::Payoff& p) {
  return p.convex.value_or(false) && p.submodular.value_or(false);
}

std::optional<FastPlan> plan_fast_path(const payoffs::Payoff& p, const MarketSpec& m,
                                       Variant variant, FastPath mode,
                                       std::vector<std::string>& warnings) {
  if (mode == FastPath::off || variant != Variant::european) return std::nullopt;
  if (m.time_dependent()) return std::nullopt;
  const bool eligible = payoff_fast_eligible(p) && (m.assets == 2 || m.assets == 3);
  if (!eligible) {
    if (mode == FastPath::on)
      warnings.push_back("fast path requested but payoff is not declared convex sub-modular"
                         " with J in {2,3}; using the general engine");
    return std::nullopt;
  }
  FastPlan plan;
  if (m.assets == 2) {
    plan.use_two_color = true;
    plan.two = submodular::two_color_coefficients(m);
    return plan;
  }
  auto c = submodular::three_color_coefficients(m);
  if (c.tag == submodular::ThreeColorCase::linear_low ||
      c.tag == submodular::ThreeColorCase::linear_high) {
    plan.use_three_color = true;
    double a[3];
    for (int j = 0; j < 3; ++j) a[j] = (m.up[j] - m.rho) / (m.up[j] - m.down[j]);
    if (c.tag == submodular::ThreeColorCase::linear_low) {
      plan.support = {7, 6, 5, 3};  // uuu and one-down vertices
      plan.weights = {c.a123, a[0], a[1], a[2]};
    } else {
      plan.support = {0, 1, 2, 4};  // ddd and one-up vertices
      plan.weights = {-(c.a123 + 1.0), 1.0 - a[0], 1.0 - a[1], 1.0 - a[2]};
    }
    // Hedge loadings of the support simplex (exact rho; independent of z).
    auto centered = centered_vertices(m, 0, m.rho);
    std::vector<Vec> support_vecs;
    for (int v : plan.support) support_vecs.push_back(centered[v]);
    try {
      auto set = minmax::ExtremeMeasureSet::build(std::move(support_vecs));
      plan.loadings = set.measures().front().hedge_loading;
    } catch (const Error&) {
      warnings.push_back("three-color support simplex is degenerate; using the general engine");
      return std::nullopt;
    }
    return plan;
  }
  warnings.push_back("three-color coefficients fall in the non-iterable band; "
                     "using the general engine");
  return std::nullopt;
}

HedgeResult recombining_price(const payoffs::Payoff& p, const Vec& z0, const MarketSpec& m_in,
                              Variant variant, Engine engine, FastPath fast_mode) {
  auto t0 = std::chrono::steady_clock::now();
  m_in.validate();
  check_prices(z0, m_in);
  if (static_cast<int>(z0.size()) != p.assets && p.assets != 0)
    throw validation_error("payoff asset count does not match the market");

  HedgeResult out;
  out.variant = variant_name(variant);
  out.assets = m_in.assets;
  out.steps = m_in.steps;
  out.z0 = z0;

  if (!p.convex.value_or(false))
    out.warnings.push_back("payoff not declared convex: the price covers the finite-jump "
                           "(vertex) model; interval-model equivalence holds for convex payoffs");

  std::optional<FastPlan> fast;
  if (engine == Engine::parallel)
    fast = plan_fast_path(p, m_in, variant, fast_mode, out.warnings);

  MarketSpec m = m_in;
  std::optional<MeasureBuild> mb;
  if (!fast) {
    mb = build_measures(m_in, 0);
    if (mb->perturbed) {
      m = mb->market;
      out.warnings.push_back("degenerate vertex layout; jump factors perturbed "
                             "by a relative 1e-9");
    }
    for (const auto& meas : mb->set.measures()) out.measure_supports.push_back(meas.indices);
  } else if (fast->use_two_color) {
    out.measure_supports = {{0, 1, 2}, {1, 2, 3}};
  } else {
    out.measure_supports = {
        std::vector<int>(fast->support.begin(), fast->support.end())};
  }
  out.market = m;
  try {
    auto spread = geom::spread_characteristics(centered_vertices(m, 0, m.rho));
    out.kappa1 = spread.kappa1;
    out.kappa2 = spread.kappa2;
    double umax = *std::max_element(m.up.begin(), m.up.end());
    double dmin = *std::min_element(m.down.begin(), m.down.end());
    double delta_n = geom::coordinate_ratio(z0) * std::pow(umax / dmin, m.steps);
    out.beta_bound = std::min(out.kappa1, out.kappa2) / (m.assets * delta_n);
  } catch (const Error&) {
    // gate diagnostics stay zero when the layout defeats them
  }

  const int J = m.assets, n = m.steps;
  const int verts = 1 << J;
  const double disc = 1.0 / m.rho;
  Grid grid(m, z0);

  out.tables.resize(n + 1);
  std::size_t total_nodes = 0;

  // Maturity layer.
  {
    StepTable& leaf = out.tables[n];
    const std::size_t count = grid.count(n);
    total_nodes += count;
    leaf.value.resize(count);
#pragma omp parallel for schedule(static)
    for (long long idx = 0; idx < static_cast<long long>(count); ++idx) {
      int counts[8];
      double z[8];
      grid.decode(static_cast<std::size_t>(idx), n, counts);
      grid.prices(n, counts, z);
      leaf.value[idx] = p(std::span<const double>(z, J));
    }
  }

  for (int step = n - 1; step >= 0; --step) {
    StepTable& tab = out.tables[step];
    const StepTable& next = out.tables[step + 1];
    const std::size_t count = grid.count(step);
    total_nodes += count;
    tab.value.resize(count);
    tab.gamma.resize(count * J);
    tab.active.assign(count, -1);
    if (variant == Variant::american) tab.exercised.assign(count, 0);

    const bool serial = engine == Engine::serial_reference;
#pragma omp parallel for schedule(static) if (!serial)
    for (long long raw = 0; raw < static_cast<long long>(count); ++raw) {
      const std::size_t idx = static_cast<std::size_t>(raw);
      int counts[8];
      double z[8];
      double vals[256];
      grid.decode(idx, step, counts);
      grid.prices(step, counts, z);
      for (int v = 0; v < verts; ++v) vals[v] = next.value[grid.child(counts, step, v)];

      double value = 0.0;
      Vec gamma(J, 0.0);
      int active = -1;

      if (fast && fast->use_two_color) {
        const auto& c = fast->two;
        const double z1 = z[0], z2 = z[1];
        const double fdd = vals[0], fud = vals[1], fdu = vals[2], fuu = vals[3];
        if (c.branch != submodular::TwoColorBranch::kappa_nonpos) {
          value = c.q1 * fud + c.q2 * fdu + c.kappa * fdd;
          gamma[0] = (fud - fdd) / (z1 * (m.up[0] - m.down[0]));
          gamma[1] = (fdu - fdd) / (z2 * (m.up[1] - m.down[1]));
          active = 0;
        } else {
          value = (1.0 - c.q1) * fdu + (1.0 - c.q2) * fud + std::fabs(c.kappa) * fuu;
          gamma[0] = (fuu - fdu) / (z1 * (m.up[0] - m.down[0]));
          gamma[1] = (fuu - fud) / (z2 * (m.up[1] - m.down[1]));
          active = 1;
        }
      } else if (fast && fast->use_three_color) {
        value = 0.0;
        for (int i = 0; i < 4; ++i) value += fast->weights[i] * vals[fast->support[i]];
        for (int i = 0; i < 4; ++i)
          for (int j = 0; j < J; ++j) gamma[j] += fast->loadings[i][j] * vals[fast->support[i]];
        for (int j = 0; j < J; ++j) gamma[j] /= z[j];
        active = 0;
      } else if (serial) {
        // Reference: re-derive the geometry and solve the full minmax anew at
        // every node. The centered family is solved in unscaled coordinates
        // (the substitution gamma' = z o gamma), which stays conditioned at
        // deep nodes where the coordinate spread is extreme.
        minmax::VertexValuation val;
        val.vectors = centered_vertices(m, 0, m.rho);
        val.values.assign(vals, vals + verts);
        auto res = variant == Variant::lower ? minmax::lower_minmax(val)
                                             : minmax::upper_minmax(val);
        value = res.value;
        for (int j = 0; j < J; ++j) gamma[j] = res.gamma[j] / z[j];
        for (std::size_t s = 0; s < out.measure_supports.size(); ++s)
          if (out.measure_supports[s] == res.active.indices) {
            active = static_cast<int>(s);
            break;
          }
      } else {
        const auto& set = mb->set;
        std::span<const double> vspan(vals, verts);
        active = set.arg_extremum(vspan, variant != Variant::lower);
        value = set.expectation(active, vspan);
        Vec gu = set.gamma(active, vspan);
        for (int j = 0; j < J; ++j) gamma[j] = gu[j] / z[j];
      }

      double price_here = disc * value;
      if (variant == Variant::american) {
        double exercise = p(std::span<const double>(z, J));
        if (exercise > price_here) {
          price_here = exercise;
          tab.exercised[idx] = 1;
        }
      }
      tab.value[idx] = price_here;
      tab.active[idx] = active;
      for (int j = 0; j < J; ++j) tab.gamma[idx * J + j] = gamma[j];
    }
  }

  out.price = out.tables[0].value[0];
  out.node_count = total_nodes;
  out.active_histogram.assign(out.measure_supports.size(), 0);
  for (int step = 0; step < n; ++step)
    for (int a : out.tables[step].active)
      if (a >= 0 && a < static_cast<int>(out.active_histogram.size()))
        ++out.active_histogram[a];
  out.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace

StepResult bellman_step_impl(const std::function<double(std::span<const double>)>& f,
                             const Vec& z, const MarketSpec& m, bool lower) {
  m.validate();
  check_prices(z, m);
  const int J = m.assets;
  MarketSpec current = m;
  for (int attempt = 0;; ++attempt) {
    try {
      auto vecs = centered_vertices(current, 0, current.rho);
      minmax::VertexValuation val;
      val.values.resize(vecs.size());
      for (std::size_t v = 0; v < vecs.size(); ++v) {
        Vec arg(J);
        for (int j = 0; j < J; ++j) {
          arg[j] = (vecs[v][j] + current.rho) * z[j];  // xi o z
          vecs[v][j] *= z[j];
        }
        val.values[v] = f(arg);
      }
      val.vectors = std::move(vecs);
      auto res = lower ? minmax::lower_minmax(val) : minmax::upper_minmax(val);
      StepResult out;
      out.value = res.value;
      out.gamma = res.gamma;
      out.active = res.active;
      out.perturbed = attempt > 0;
      return out;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::degenerate || attempt >= 3) throw;
      current = nudge_factors(m, 1e-9 * std::pow(10.0, attempt));
    }
  }
}

StepResult bellman_step(const std::function<double(std::span<const double>)>& f,
                        const Vec& z, const MarketSpec& m) {
  return bellman_step_impl(f, z, m, false);
}

StepResult bellman_step_lower(const std::function<double(std::span<const double>)>& f,
                              const Vec& z, const MarketSpec& m) {
  return bellman_step_impl(f, z, m, true);
}

HedgeResult price_european(const payoffs::Payoff& p, const Vec& z0, const MarketSpec& m,
                           Engine engine, FastPath fast_path) {
  if (m.time_dependent()) {
    PathPayoff terminal = [&p](std::span<const Vec> path) { return p(path.back()); };
    auto out = price_path_dependent(terminal, z0, m);
    out.variant = "european";
    return out;
  }
  return recombining_price(p, z0, m, Variant::european, engine, fast_path);
}

HedgeResult price_american(const payoffs::Payoff& p, const Vec& z0, const MarketSpec& m,
                           Engine engine, FastPath fast_path) {
  if (m.time_dependent())
    throw validation_error("american pricing supports constant factors only");
  return recombining_price(p, z0, m, Variant::american, engine, fast_path);
}

HedgeResult price_lower(const payoffs::Payoff& p, const Vec& z0, const MarketSpec& m,
                        Engine engine) {
  if (m.time_dependent()) throw validation_error("lower pricing supports constant factors only");
  return recombining_price(p, z0, m, Variant::lower, engine, FastPath::off);
}

HedgeResult price_path_dependent(const PathPayoff& p, const Vec& z0, const MarketSpec& m) {
  auto t0 = std::chrono::steady_clock::now();
  m.validate();
  check_prices(z0, m);
  const int J = m.assets, n = m.steps;
  if (J * n > 24)
    throw resource_error("path-dependent budget exceeded: requires assets*steps <= 24");
  const int verts = 1 << J;

  HedgeResult out;
  out.variant = "path_dependent";
  out.assets = J;
  out.steps = n;
  out.z0 = z0;
  out.market = m;

  // Per-step measure sets (factors may differ per step). A degenerate layout
  // at any step nudges the whole market once and restarts.
  MarketSpec market = m;
  std::vector<minmax::ExtremeMeasureSet> sets;
  for (int s = 0; s < n; ++s) {
    auto mbuild = build_measures(market, s);
    if (mbuild.perturbed) {
      if (out.warnings.empty())
        out.warnings.push_back("degenerate vertex layout; jump factors perturbed by a "
                               "relative 1e-9");
      market = mbuild.market;
      out.market = market;
      sets.clear();
      s = -1;
      continue;
    }
    sets.push_back(std::move(mbuild.set));
  }
  std::vector<std::vector<Vec>> factors(n);
  for (int s = 0; s < n; ++s) factors[s] = vertex_factor_list(market, s);
  const double disc = 1.0 / market.rho;

  std::size_t leaves = 1;
  for (int s = 0; s < n; ++s) leaves *= static_cast<std::size_t>(verts);
  std::vector<double> level(leaves), prev;
  out.node_count = 0;

  // Path codes place step 0 in the highest digit, so the children of a
  // prefix are contiguous blocks of the finer level.
#pragma omp parallel for schedule(static)
  for (long long raw = 0; raw < static_cast<long long>(leaves); ++raw) {
    std::size_t code = static_cast<std::size_t>(raw);
    std::vector<Vec> path(n + 1);
    path[0] = z0;
    std::size_t place = leaves;
    for (int s = 0; s < n; ++s) {
      place /= verts;
      int v = static_cast<int>((code / place) % verts);
      path[s + 1] = hadamard(path[s], factors[s][v]);
    }
    level[raw] = p(path);
  }
  out.node_count += leaves;

  std::size_t width = leaves;
  for (int step = n - 1; step >= 0; --step) {
    width /= verts;
    prev.assign(width, 0.0);
    const auto& set = sets[step];
#pragma omp parallel for schedule(static)
    for (long long raw = 0; raw < static_cast<long long>(width); ++raw) {
      std::span<const double> vals(level.data() + raw * verts, verts);
      int best = set.arg_extremum(vals, true);
      prev[raw] = disc * set.expectation(best, vals);
    }
    out.node_count += width;
    std::swap(level, prev);
  }
  out.price = level[0];
  out.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

namespace {

double nonlinear_value(const payoffs::Payoff& p, const Vec& z, const MarketSpec& m,
                       int depth, std::vector<int>& trail) {
  if (depth == m.steps) return p(z);
  const std::size_t k = m.jump_maps.size();
  std::vector<Vec> images(k), centered(k);
  std::vector<double> vals(k);
  for (std::size_t i = 0; i < k; ++i) {
    images[i] = m.jump_maps[i](z);
    if (images[i].size() != z.size())
      throw argument_error("jump map changed the dimension");
    centered[i].resize(z.size());
    for (std::size_t j = 0; j < z.size(); ++j)
      centered[i][j] = images[i][j] - m.rho * z[j];
  }
  for (std::size_t i = 0; i < k; ++i) {
    trail.push_back(static_cast<int>(i));
    vals[i] = nonlinear_value(p, images[i], m, depth + 1, trail);
    trail.pop_back();
  }
  minmax::VertexValuation val;
  val.vectors = std::move(centered);
  val.values = std::move(vals);
  try {
    auto res = minmax::upper_minmax(val);
    return res.value / m.rho;
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::infeasible && e.kind() != ErrorKind::degenerate) throw;
    std::ostringstream msg;
    msg << "nonlinear jumps: positive completeness fails at node [";
    for (std::size_t i = 0; i < trail.size(); ++i) msg << (i ? " " : "") << trail[i];
    msg << "], prices (";
    for (std::size_t j = 0; j < z.size(); ++j) msg << (j ? " " : "") << z[j];
    msg << "): " << e.what();
    throw Error(e.kind(), msg.str());
  }
}

}  // namespace

HedgeResult price_nonlinear_jumps(const payoffs::Payoff& p, const Vec& z0, const MarketSpec& m) {
  auto t0 = std::chrono::steady_clock::now();
  m.validate();
  check_prices(z0, m);
  if (m.jump_maps.empty())
    throw validation_error("nonlinear pricing requires jump maps");
  const double k = static_cast<double>(m.jump_maps.size());
  if (m.steps * std::log2(std::max(2.0, k)) > 18.0)
    throw resource_error("nonlinear-jump budget exceeded: requires k^steps <= 2^18");

  HedgeResult out;
  out.variant = "nonlinear_jumps";
  out.assets = m.assets;
  out.steps = m.steps;
  out.z0 = z0;
  out.market = m;
  if (m.jump_maps.size() == static_cast<std::size_t>(m.assets) + 1)
    out.warnings.push_back("k = J+1 jumps: the market is complete and the "
                           "risk-neutral measure per node is unique");
  if (!p.convex.value_or(false))
    out.warnings.push_back("payoff not declared convex: the price covers the finite-jump "
                           "model only");
  std::vector<int> trail;
  out.price = nonlinear_value(p, z0, m, 0, trail);
  std::size_t nodes = 0, layer = 1;
  for (int s = 0; s <= m.steps; ++s) {
    nodes += layer;
    layer *= m.jump_maps.size();
  }
  out.node_count = nodes;
  out.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

double cost_beta_bound(const Vec& z0, const MarketSpec& m) {
  m.validate();
  check_prices(z0, m);
  auto spread = geom::spread_characteristics(centered_vertices(m, 0, m.rho));
  double umax = *std::max_element(m.up.begin(), m.up.end());
  double dmin = *std::min_element(m.down.begin(), m.down.end());
  double delta_n = geom::coordinate_ratio(z0) * std::pow(umax / dmin, m.steps);
  return std::min(spread.kappa1, spread.kappa2) / (m.assets * delta_n);
}

HedgeResult price_with_costs(const payoffs::Payoff& p, const Vec& z0, const MarketSpec& m_in,
                             const CostModel& costs, const Vec* initial_hedge) {
  auto t0 = std::chrono::steady_clock::now();
  m_in.validate();
  check_prices(z0, m_in);
  if (!costs.cost) throw validation_error("cost model has no cost function");
  if (m_in.time_dependent())
    throw validation_error("costed pricing supports constant factors only");

  HedgeResult out;
  out.variant = "costed";
  out.assets = m_in.assets;
  out.steps = m_in.steps;
  out.z0 = z0;

  auto mb = build_measures(m_in, 0);
  MarketSpec m = m_in;
  if (mb.perturbed) {
    m = mb.market;
    out.warnings.push_back("degenerate vertex layout; jump factors perturbed by a "
                           "relative 1e-9");
  }
  out.market = m;
  out.cost_model = costs;

  // Theorem gate: beta < min(kappa1, kappa2) / (d * delta_n(z)).
  {
    auto spread = geom::spread_characteristics(centered_vertices(m, 0, m.rho));
    out.kappa1 = spread.kappa1;
    out.kappa2 = spread.kappa2;
    double umax = *std::max_element(m.up.begin(), m.up.end());
    double dmin = *std::min_element(m.down.begin(), m.down.end());
    double delta_n = geom::coordinate_ratio(z0) * std::pow(umax / dmin, m.steps);
    out.beta_bound = std::min(spread.kappa1, spread.kappa2) / (m.assets * delta_n);
    if (!(costs.beta < out.beta_bound)) {
      std::ostringstream msg;
      msg << "transaction-cost gate: beta = " << costs.beta
          << " is not below the admissible bound " << out.beta_bound
          << " (min(kappa1, kappa2) / (d * delta_n(z)))";
      throw precondition_error(msg.str());
    }
  }

  const auto& set = mb.set;
  const int J = m.assets, n = m.steps;
  const int verts = 1 << J;
  const int nmeas = static_cast<int>(set.measures().size());
  const double disc = 1.0 / m.rho;
  Grid grid(m, z0);
  for (const auto& meas : set.measures()) out.measure_supports.push_back(meas.indices);

  out.tables.resize(n + 1);
  std::size_t total_nodes = 0;

  {
    StepTable& leaf = out.tables[n];
    const std::size_t count = grid.count(n);
    total_nodes += count;
    leaf.value.resize(count);
#pragma omp parallel for schedule(static)
    for (long long idx = 0; idx < static_cast<long long>(count); ++idx) {
      int counts[8];
      double z[8];
      grid.decode(static_cast<std::size_t>(idx), n, counts);
      grid.prices(n, counts, z);
      leaf.value[idx] = p(std::span<const double>(z, J));
    }
  }

  // W_step(node, v) = max over measures of A + disc * g(gamma_meas - v, z).
  auto eval_W = [&](int step, std::size_t node, std::span<const double> v) -> double {
    const StepTable& tab = out.tables[step];
    if (step == n) return tab.value[node];
    int counts[8];
    double z[8];
    grid.decode(node, step, counts);
    grid.prices(step, counts, z);
    double best = -std::numeric_limits<double>::infinity();
    Vec dg(J);
    for (int meas = 0; meas < nmeas; ++meas) {
      const double* g = &tab.gamma[(node * nmeas + meas) * J];
      for (int j = 0; j < J; ++j) dg[j] = g[j] - v[j];
      double w = tab.value[node * nmeas + meas] +
                 disc * costs.cost(dg, std::span<const double>(z, J));
      best = std::max(best, w);
    }
    return best;
  };

  for (int step = n - 1; step >= 0; --step) {
    StepTable& tab = out.tables[step];
    const std::size_t count = grid.count(step);
    total_nodes += count;
    tab.per_node = nmeas;
    tab.value.resize(count * nmeas);
    tab.gamma.resize(count * nmeas * J);
    tab.active.assign(count, -1);

#pragma omp parallel for schedule(static)
    for (long long raw = 0; raw < static_cast<long long>(count); ++raw) {
      const std::size_t idx = static_cast<std::size_t>(raw);
      int counts[8];
      double z[8];
      grid.decode(idx, step, counts);
      grid.prices(step, counts, z);
      std::size_t children[256];
      for (int v = 0; v < verts; ++v) children[v] = grid.child(counts, step, v);

      std::vector<double> vals(verts, 0.0);
      Vec g(J, 0.0), gnext(J, 0.0);
      for (int meas = 0; meas < nmeas; ++meas) {
        const auto& mdef = set.measures()[meas];
        // Fixed point: gamma = sum_i loading_i W_next(child_i, gamma) / z.
        std::fill(g.begin(), g.end(), 0.0);
        for (int i : mdef.indices) vals[i] = eval_W(step + 1, children[i], g);
        Vec gu = set.gamma(meas, vals);
        for (int j = 0; j < J; ++j) g[j] = gu[j] / z[j];
        bool converged = false;
        for (int it = 0; it < 200; ++it) {
          for (int i : mdef.indices) vals[i] = eval_W(step + 1, children[i], g);
          gu = set.gamma(meas, vals);
          double shift = 0.0, gn = 0.0;
          for (int j = 0; j < J; ++j) {
            gnext[j] = gu[j] / z[j];
            shift += (gnext[j] - g[j]) * (gnext[j] - g[j]);
            gn += gnext[j] * gnext[j];
          }
          g = gnext;
          if (std::sqrt(shift) < 1e-12 * (1.0 + std::sqrt(gn))) {
            converged = true;
            break;
          }
        }
        if (!converged)
          throw numeric_error("costed pricing: hedge fixed point did not converge");
        for (int i : mdef.indices) vals[i] = eval_W(step + 1, children[i], g);
        tab.value[idx * nmeas + meas] = disc * set.expectation(meas, vals);
        for (int j = 0; j < J; ++j) tab.gamma[(idx * nmeas + meas) * J + j] = g[j];
      }
    }
  }

  Vec v0(J, 0.0);
  if (initial_hedge) {
    if (initial_hedge->size() != static_cast<std::size_t>(J))
      throw argument_error("initial hedge has wrong dimension");
    v0 = *initial_hedge;
  }
  out.price = n == 0 ? out.tables[0].value[0] : eval_W(0, 0, v0);
  out.node_count = total_nodes;
  out.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

std::size_t HedgeResult::node_index(int step, std::span<const int> up_counts) const {
  const std::size_t base = static_cast<std::size_t>(step + 1);
  std::size_t idx = 0;
  for (int j = assets - 1; j >= 0; --j) {
    if (up_counts[j] < 0 || up_counts[j] > step) throw argument_error("node out of range");
    idx = idx * base + static_cast<std::size_t>(up_counts[j]);
  }
  return idx;
}

Vec HedgeResult::node_prices(int step, std::span<const int> up_counts) const {
  Vec z(assets);
  for (int j = 0; j < assets; ++j)
    z[j] = z0[j] * std::pow(market.up[j], up_counts[j]) *
           std::pow(market.down[j], step - up_counts[j]);
  return z;
}

std::vector<Vec> extract_strategy(const HedgeResult& h, std::span<const int> path) {
  if (!h.has_tables()) throw argument_error("strategy extraction needs stored node tables");
  if (static_cast<int>(path.size()) != h.steps)
    throw argument_error("path length must equal the number of steps");
  const int J = h.assets;
  const bool costed = h.variant == "costed";
  std::vector<Vec> gammas;
  gammas.reserve(h.steps);
  std::vector<int> counts(J, 0);
  Vec v(J, 0.0);
  const double disc = 1.0 / h.market.rho;
  for (int step = 0; step < h.steps; ++step) {
    int vertex = path[step];
    if (vertex < 0 || vertex >= (1 << J)) throw argument_error("vertex id out of range");
    std::size_t idx = h.node_index(step, counts);
    const StepTable& tab = h.table(step);
    Vec g(J);
    if (!costed) {
      for (int j = 0; j < J; ++j) g[j] = tab.gamma[idx * J + j];
    } else {
      // Active measure depends on the carried hedge v.
      Vec z = h.node_prices(step, counts);
      int nmeas = tab.per_node;
      double best = -std::numeric_limits<double>::infinity();
      int besti = 0;
      Vec dg(J);
      for (int meas = 0; meas < nmeas; ++meas) {
        const double* gm = &tab.gamma[(idx * nmeas + meas) * J];
        for (int j = 0; j < J; ++j) dg[j] = gm[j] - v[j];
        double w = tab.value[idx * nmeas + meas];
        if (h.cost_model.cost) w += disc * h.cost_model.cost(dg, z);
        if (w > best) {
          best = w;
          besti = meas;
        }
      }
      for (int j = 0; j < J; ++j) g[j] = tab.gamma[(idx * nmeas + besti) * J + j];
      v = g;
    }
    gammas.push_back(std::move(g));
    for (int j = 0; j < J; ++j) counts[j] += (vertex >> j) & 1;
  }
  return gammas;
}

double replay_shortfall(const HedgeResult& h, std::span<const int> path) {
  if (h.variant != "european" && h.variant != "costed")
    throw argument_error("replay supports european and costed results");
  auto gammas = extract_strategy(h, path);
  const int J = h.assets;
  std::vector<int> counts(J, 0);
  double capital = h.price;
  Vec prev_hedge(J, 0.0);
  for (int step = 0; step < h.steps; ++step) {
    Vec z = h.node_prices(step, counts);
    int vertex = path[step];
    double gain = 0.0;
    for (int j = 0; j < J; ++j) {
      double factor = (vertex >> j) & 1 ? h.market.up[j] : h.market.down[j];
      gain += gammas[step][j] * (factor - h.market.rho) * z[j];
    }
    capital = h.market.rho * capital + gain;
    if (h.variant == "costed" && h.cost_model.cost) {
      Vec dg(J);
      for (int j = 0; j < J; ++j) dg[j] = gammas[step][j] - prev_hedge[j];
      capital -= h.cost_model.cost(dg, z);
      prev_hedge = gammas[step];
    }
    for (int j = 0; j < J; ++j) counts[j] += (vertex >> j) & 1;
  }
  std::size_t leaf = h.node_index(h.steps, counts);
  return capital - h.table(h.steps).value[leaf];
}

}  // namespace rainbow::lattice
