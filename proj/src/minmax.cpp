#include "rainbow/minmax.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace rainbow::minmax {

namespace {

void check_valuation(const VertexValuation& v) {
  if (v.vectors.empty()) throw argument_error("minmax: empty vertex family");
  const std::size_t d = v.vectors.front().size();
  if (v.vectors.size() < d + 1) throw argument_error("minmax: need at least d+1 vertices");
  if (!v.values.empty() && v.values.size() != v.vectors.size())
    throw argument_error("minmax: values/vectors size mismatch");
}

std::vector<double> static_values(const VertexValuation& v) {
  if (!v.values.empty()) return v.values;
  if (!v.value_fn) throw argument_error("minmax: no values supplied");
  Vec zero(v.vectors.front().size(), 0.0);
  std::vector<double> out(v.vectors.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = v.value_fn(static_cast<int>(i), zero);
  return out;
}

}  // namespace

ExtremeMeasureSet ExtremeMeasureSet::build(std::vector<Vec> vectors) {
  ExtremeMeasureSet set;
  set.dim_ = static_cast<int>(vectors.front().size());
  set.vectors_ = std::move(vectors);
  const int d = set.dim_;
  const int k = static_cast<int>(set.vectors_.size());

  auto rep = geom::is_general_position(set.vectors_, d);
  if (!rep.positively_spanning) {
    std::ostringstream msg;
    msg << "minmax: family lies in a half-space, the functional is unbounded below";
    if (!rep.separating_direction.empty()) {
      msg << " (separating direction";
      for (double w : rep.separating_direction) msg << ' ' << w;
      msg << ')';
    }
    throw infeasible_error(msg.str());
  }
  if (!rep.no_dependent_subset) {
    std::ostringstream msg;
    msg << "minmax: degenerate family, vertices";
    for (int i : rep.dependent_subset) msg << ' ' << i;
    msg << " are linearly dependent";
    throw degeneracy_error(msg.str());
  }

  // All (d+1)-subsets with the origin interior to their hull.
  std::vector<int> idx(d + 1);
  std::function<void(int, int)> rec = [&](int start, int depth) {
    if (depth == d + 1) {
      std::vector<Vec> sub;
      sub.reserve(d + 1);
      for (int i : idx) sub.push_back(set.vectors_[i]);
      auto bary = geom::origin_barycentric(sub);
      if (!bary) return;
      for (double p : *bary)
        if (p <= 1e-12) return;
      Measure m;
      m.indices = idx;
      m.weights = *bary;
      // gamma(values) = sum_i values[i] * hedge_loading[i] with loadings from
      // the rotor form: loading_i = -p_i rotor_tilde(hat xi_i) / D(hat xi_i).
      m.hedge_loading.resize(d + 1);
      for (int drop = 0; drop <= d; ++drop) {
        std::vector<Vec> hat;
        hat.reserve(d);
        for (int j = 0; j <= d; ++j)
          if (j != drop) hat.push_back(set.vectors_[idx[j]]);
        double vol = d == 1 ? hat[0][0] : geom::oriented_volume(hat);
        Vec rt = geom::rotor_tilde(hat);
        m.hedge_loading[drop] = scaled(rt, -m.weights[drop] / vol);
      }
      set.measures_.push_back(std::move(m));
      return;
    }
    for (int i = start; i <= k - (d + 1 - depth); ++i) {
      idx[depth] = i;
      rec(i + 1, depth + 1);
    }
  };
  rec(0, 0);
  if (set.measures_.empty())
    throw infeasible_error("minmax: no extreme risk-neutral measure found");
  return set;
}

double ExtremeMeasureSet::expectation(int measure, std::span<const double> values) const {
  const Measure& m = measures_[measure];
  double s = 0.0;
  for (std::size_t i = 0; i < m.indices.size(); ++i) s += m.weights[i] * values[m.indices[i]];
  return s;
}

int ExtremeMeasureSet::arg_extremum(std::span<const double> values, bool maximize) const {
  double best_val = expectation(0, values);
  for (int i = 1; i < static_cast<int>(measures_.size()); ++i) {
    double v = expectation(i, values);
    if (maximize ? v > best_val : v < best_val) best_val = v;
  }
  // Measures are enumerated in lexicographic order, so the first candidate
  // inside the tie band is the lexicographically smallest index set.
  const double tol = 1e-12 * (1.0 + std::fabs(best_val));
  for (int i = 0; i < static_cast<int>(measures_.size()); ++i)
    if (std::fabs(expectation(i, values) - best_val) <= tol) return i;
  return 0;
}

Vec ExtremeMeasureSet::gamma(int measure, std::span<const double> values) const {
  const Measure& m = measures_[measure];
  Vec g(dim_, 0.0);
  for (std::size_t i = 0; i < m.indices.size(); ++i) {
    const Vec& load = m.hedge_loading[i];
    double f = values[m.indices[i]];
    for (int j = 0; j < dim_; ++j) g[j] += f * load[j];
  }
  return g;
}

namespace {

MinmaxResult run_linear(const VertexValuation& v, bool maximize) {
  check_valuation(v);
  auto values = static_values(v);
  auto set = ExtremeMeasureSet::build(v.vectors);
  MinmaxResult out;
  out.candidates.reserve(set.measures().size());
  for (std::size_t i = 0; i < set.measures().size(); ++i) {
    Candidate c;
    c.indices = set.measures()[i].indices;
    c.expectation = set.expectation(static_cast<int>(i), values);
    out.candidates.push_back(std::move(c));
  }
  int best = set.arg_extremum(values, maximize);
  out.value = set.expectation(best, values);
  out.gamma = set.gamma(best, values);
  out.active.indices = set.measures()[best].indices;
  out.active.weights = set.measures()[best].weights;
  out.active.gamma = out.gamma;
  return out;
}

}  // namespace

MinmaxResult upper_minmax(const VertexValuation& v) { return run_linear(v, true); }

MinmaxResult lower_minmax(const VertexValuation& v) { return run_linear(v, false); }

MinmaxResult costed_minmax(const VertexValuation& v,
                           const std::function<double(std::span<const double>)>& cost,
                           double cost_slope) {
  check_valuation(v);
  auto values = static_values(v);
  auto spread = geom::spread_characteristics(v.vectors);
  if (!(cost_slope < spread.kappa1)) {
    std::ostringstream msg;
    msg << "costed_minmax: cost slope " << cost_slope
        << " violates the separation gate kappa1 = " << spread.kappa1;
    throw precondition_error(msg.str());
  }
  auto set = ExtremeMeasureSet::build(v.vectors);
  MinmaxResult out;
  std::vector<double> totals(set.measures().size());
  for (std::size_t i = 0; i < set.measures().size(); ++i) {
    Vec g = set.gamma(static_cast<int>(i), values);
    totals[i] = set.expectation(static_cast<int>(i), values) + cost(g);
    Candidate c;
    c.indices = set.measures()[i].indices;
    c.expectation = totals[i];
    out.candidates.push_back(std::move(c));
  }
  double best_val = *std::max_element(totals.begin(), totals.end());
  int best = 0;
  const double tie = 1e-12 * (1.0 + std::fabs(best_val));
  while (best < static_cast<int>(totals.size()) && std::fabs(totals[best] - best_val) > tie) ++best;
  out.value = totals[best];
  out.gamma = set.gamma(best, values);
  out.active.indices = set.measures()[best].indices;
  out.active.weights = set.measures()[best].weights;
  out.active.gamma = out.gamma;
  return out;
}

MinmaxResult nonlinear_minmax(const VertexValuation& v, FixedPointOptions opts) {
  check_valuation(v);
  if (!v.value_fn) throw argument_error("nonlinear_minmax: value_fn required");
  auto spread = geom::spread_characteristics(v.vectors);
  const double gate = std::min(spread.kappa1, spread.kappa2);
  if (!(v.lipschitz < gate)) {
    std::ostringstream msg;
    msg << "nonlinear_minmax: Lipschitz bound " << v.lipschitz
        << " violates the gate min(kappa1, kappa2) = " << gate;
    throw precondition_error(msg.str());
  }
  auto set = ExtremeMeasureSet::build(v.vectors);
  const int d = set.dim();
  const std::size_t k = v.vectors.size();

  MinmaxResult out;
  std::vector<double> totals(set.measures().size());
  std::vector<Vec> gammas(set.measures().size());
  std::vector<double> vals(k, 0.0);
  for (std::size_t mi = 0; mi < set.measures().size(); ++mi) {
    const auto& m = set.measures()[mi];
    // Start from the hedge of the valuation frozen at gamma = 0.
    Vec g(d, 0.0);
    for (std::size_t i = 0; i < k; ++i) vals[i] = v.value_fn(static_cast<int>(i), g);
    g = set.gamma(static_cast<int>(mi), vals);
    bool converged = false;
    for (int it = 0; it < opts.max_iterations; ++it) {
      for (int i : m.indices) vals[i] = v.value_fn(i, g);
      Vec next = set.gamma(static_cast<int>(mi), vals);
      double step = norm(sub(next, g));
      g = std::move(next);
      if (step < opts.tolerance * (1.0 + norm(g))) {
        converged = true;
        break;
      }
    }
    if (!converged)
      throw numeric_error("nonlinear_minmax: fixed point did not converge");
    for (int i : m.indices) vals[i] = v.value_fn(i, g);
    totals[mi] = set.expectation(static_cast<int>(mi), vals);
    gammas[mi] = std::move(g);
    Candidate c;
    c.indices = m.indices;
    c.expectation = totals[mi];
    out.candidates.push_back(std::move(c));
  }
  double best_val = *std::max_element(totals.begin(), totals.end());
  int best = 0;
  const double tie = 1e-12 * (1.0 + std::fabs(best_val));
  while (best < static_cast<int>(totals.size()) && std::fabs(totals[best] - best_val) > tie) ++best;
  out.value = totals[best];
  out.gamma = gammas[best];
  out.active.indices = set.measures()[best].indices;
  out.active.weights = set.measures()[best].weights;
  out.active.gamma = out.gamma;
  return out;
}

}  // namespace rainbow::minmax
