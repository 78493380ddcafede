#include "rainbow/payoffs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rainbow/errors.hpp"

namespace rainbow::payoffs {

std::string kind_name(Kind k) {
  switch (k) {
    case Kind::best_of: return "best_of";
    case Kind::call_on_max: return "call_on_max";
    case Kind::multi_strike: return "multi_strike";
    case Kind::portfolio: return "portfolio";
    case Kind::spread: return "spread";
    case Kind::custom: return "custom";
  }
  return "custom";
}

Payoff make_best_of(int assets, double strike) {
  if (assets < 1) throw argument_error("best_of: need at least one asset");
  Payoff p;
  p.kind = Kind::best_of;
  p.assets = assets;
  p.strike = strike;
  p.convex = true;
  p.submodular = true;
  p.eval = [strike](std::span<const double> z) {
    double m = strike;
    for (double v : z) m = std::max(m, v);
    return m;
  };
  return p;
}

Payoff make_call_on_max(int assets, double strike) {
  if (assets < 1) throw argument_error("call_on_max: need at least one asset");
  Payoff p;
  p.kind = Kind::call_on_max;
  p.assets = assets;
  p.strike = strike;
  p.convex = true;
  p.submodular = true;
  p.eval = [strike](std::span<const double> z) {
    double m = 0.0;
    for (double v : z) m = std::max(m, v - strike);
    return m;
  };
  return p;
}

Payoff make_multi_strike(std::vector<double> strikes) {
  if (strikes.empty()) throw argument_error("multi_strike: strikes required");
  Payoff p;
  p.kind = Kind::multi_strike;
  p.assets = static_cast<int>(strikes.size());
  p.strikes = std::move(strikes);
  p.convex = true;
  p.submodular = true;
  p.eval = [ks = p.strikes](std::span<const double> z) {
    double m = 0.0;
    for (std::size_t j = 0; j < ks.size(); ++j) m = std::max(m, z[j] - ks[j]);
    return m;
  };
  return p;
}

Payoff make_portfolio(std::vector<double> weights, double strike) {
  if (weights.empty()) throw argument_error("portfolio: weights required");
  Payoff p;
  p.kind = Kind::portfolio;
  p.assets = static_cast<int>(weights.size());
  p.strike = strike;
  p.weights = std::move(weights);
  p.convex = true;
  // A portfolio payoff has nonnegative mixed second differences, so it is
  // convex but not sub-modular in general.
  p.submodular = false;
  p.eval = [ws = p.weights, strike](std::span<const double> z) {
    double s = -strike;
    for (std::size_t j = 0; j < ws.size(); ++j) s += ws[j] * z[j];
    return std::max(0.0, s);
  };
  return p;
}

Payoff make_spread(double strike) {
  Payoff p;
  p.kind = Kind::spread;
  p.assets = 2;
  p.strike = strike;
  p.convex = true;
  // g(z2 - z1) with convex g has mixed second derivative -g'' <= 0.
  p.submodular = true;
  p.eval = [strike](std::span<const double> z) {
    return std::max(0.0, (z[1] - z[0]) - strike);
  };
  return p;
}

Payoff make_custom(int assets, std::function<double(std::span<const double>)> eval) {
  Payoff p;
  p.kind = Kind::custom;
  p.assets = assets;
  p.eval = std::move(eval);
  return p;
}

SubmodularReport check_submodular(const Payoff& p, const Box& box, int grid) {
  const int d = box.dim();
  if (d < 2) throw argument_error("check_submodular: need at least two coordinates");
  for (int j = 0; j < d; ++j)
    if (!(box.lo[j] > 0.0) || !(box.hi[j] >= box.lo[j]))
      throw argument_error("check_submodular: box must be strictly positive");
  if (grid < 2) grid = 2;

  SubmodularReport rep;
  Vec base(d), x(d), y(d), lo_pt(d), hi_pt(d);
  auto coord = [&](int j, int g) {
    return box.lo[j] + (box.hi[j] - box.lo[j]) * g / (grid - 1);
  };
  const double scale = std::max(1.0, std::fabs(p(box.hi)));
  for (int i = 0; i < d; ++i) {
    for (int j = i + 1; j < d; ++j) {
      // Anchor the remaining coordinates on a coarse grid.
      int anchors = d == 2 ? 1 : 3;
      for (int a = 0; a < anchors; ++a) {
        for (int m = 0; m < d; ++m)
          base[m] = box.lo[m] + (box.hi[m] - box.lo[m]) * (a + 1.0) / (anchors + 1.0);
        for (int gi = 0; gi < grid; ++gi) {
          for (int gj = 0; gj < grid; ++gj) {
            for (int hi = gi + 1; hi < grid; ++hi) {
              for (int hj = gj + 1; hj < grid; ++hj) {
                x = base; y = base; lo_pt = base; hi_pt = base;
                x[i] = coord(i, gi); x[j] = coord(j, hj);
                y[i] = coord(i, hi); y[j] = coord(j, gj);
                lo_pt[i] = coord(i, gi); lo_pt[j] = coord(j, gj);
                hi_pt[i] = coord(i, hi); hi_pt[j] = coord(j, hj);
                double slack = p(lo_pt) + p(hi_pt) - p(x) - p(y);
                if (slack > rep.worst_violation) {
                  rep.worst_violation = slack;
                  rep.coord_i = i;
                  rep.coord_j = j;
                  rep.witness = lo_pt;
                }
              }
            }
          }
        }
      }
    }
  }
  rep.pass = rep.worst_violation <= 1e-9 * scale;
  return rep;
}

namespace {

double power_term(std::span<const int> expo, std::span<const double> z) {
  double v = 1.0;
  for (std::size_t j = 0; j < expo.size(); ++j) {
    for (int e = 0; e < expo[j]; ++e) v *= z[j];
  }
  return v;
}

// Least-max affine fit values ~ c * g + a over samples: for fixed c the best
// offset is the midrange of (values - c g); the resulting sup error is convex
// in c, so a ternary search nails it.
struct AffineFit {
  double coeff = 0.0, offset = 0.0, sup = 0.0;
};

AffineFit least_max_affine(const std::vector<double>& g, const std::vector<double>& f) {
  auto sup_for = [&](double c) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t s = 0; s < g.size(); ++s) {
      double r = f[s] - c * g[s];
      lo = std::min(lo, r);
      hi = std::max(hi, r);
    }
    return std::pair{(hi - lo) / 2.0, (hi + lo) / 2.0};
  };
  // Bracket around the least-squares slope.
  double sg = 0.0, sgg = 0.0, sf = 0.0, sgf = 0.0;
  const double n = static_cast<double>(g.size());
  for (std::size_t s = 0; s < g.size(); ++s) {
    sg += g[s]; sgg += g[s] * g[s]; sf += f[s]; sgf += g[s] * f[s];
  }
  double denom = n * sgg - sg * sg;
  double c0 = denom > 1e-30 ? (n * sgf - sg * sf) / denom : 0.0;
  double radius = 1.0 + std::fabs(c0);
  double a = c0 - radius, b = c0 + radius;
  // Expand until the minimum is interior.
  for (int grow = 0; grow < 60; ++grow) {
    if (sup_for(a).first > sup_for(c0).first && sup_for(b).first > sup_for(c0).first) break;
    radius *= 2.0;
    a = c0 - radius;
    b = c0 + radius;
  }
  for (int it = 0; it < 200; ++it) {
    double m1 = a + (b - a) / 3.0, m2 = b - (b - a) / 3.0;
    if (sup_for(m1).first <= sup_for(m2).first) b = m2; else a = m1;
    if (b - a < 1e-14 * (1.0 + std::fabs(a))) break;
  }
  AffineFit fit;
  fit.coeff = (a + b) / 2.0;
  auto [sup, offset] = sup_for(fit.coeff);
  fit.sup = sup;
  fit.offset = offset;
  return fit;
}

}  // namespace

PowerFit power_fit(const Payoff& p, const Box& box, int exponent_budget, int samples_per_dim) {
  const int d = box.dim();
  for (int j = 0; j < d; ++j)
    if (!(box.lo[j] > 0.0)) throw argument_error("power_fit: box must be strictly positive");
  if (exponent_budget < 0) exponent_budget = 0;
  if (samples_per_dim < 2) samples_per_dim = 2;

  // Sample grid.
  std::vector<Vec> samples;
  std::vector<int> ctr(d, 0);
  for (;;) {
    Vec z(d);
    for (int j = 0; j < d; ++j)
      z[j] = box.lo[j] + (box.hi[j] - box.lo[j]) * ctr[j] / (samples_per_dim - 1);
    samples.push_back(std::move(z));
    int j = 0;
    while (j < d && ++ctr[j] == samples_per_dim) ctr[j++] = 0;
    if (j == d) break;
  }
  std::vector<double> f(samples.size());
  for (std::size_t s = 0; s < samples.size(); ++s) f[s] = p(samples[s]);

  PowerFit best;
  best.sup_error = std::numeric_limits<double>::infinity();
  std::vector<int> expo(d, 0);
  std::vector<double> g(samples.size());
  for (;;) {
    for (std::size_t s = 0; s < samples.size(); ++s) g[s] = power_term(expo, samples[s]);
    auto fit = least_max_affine(g, f);
    bool all_zero = std::all_of(expo.begin(), expo.end(), [](int e) { return e == 0; });
    if (all_zero) fit.coeff = 0.0;  // constant term only; keep it canonical
    if (all_zero) {
      double lo = *std::min_element(f.begin(), f.end());
      double hi = *std::max_element(f.begin(), f.end());
      fit.offset = (hi + lo) / 2.0;
      fit.sup = (hi - lo) / 2.0;
    }
    if (fit.sup < best.sup_error - 1e-15) {
      best.exponents = expo;
      best.offset = fit.offset;
      best.coeff = fit.coeff;
      best.sup_error = fit.sup;
    }
    int j = 0;
    while (j < d && ++expo[j] > exponent_budget) expo[j++] = 0;
    if (j == d) break;
  }
  best.domain = box;
  return best;
}

double power_eval(const PowerFit& fit, std::span<const double> z) {
  return fit.offset + fit.coeff * power_term(fit.exponents, z);
}

}  // namespace rainbow::payoffs
