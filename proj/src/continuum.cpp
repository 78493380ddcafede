#include "rainbow/continuum.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace rainbow::continuum {

namespace {

constexpr double kSqrt2Pi = 2.5066282746310005024;

// Adaptive Simpson on [a, b] with mixed absolute/relative tolerance.
struct Simpson {
  const std::function<double(double)>& f;
  double tol;
  int max_depth = 32;

  double run(double a, double b) const {
    double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
    double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return rec(a, b, fa, fm, fb, whole, max_depth);
  }

  double rec(double a, double b, double fa, double fm, double fb, double whole,
             int depth) const {
    double m = 0.5 * (a + b);
    double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    double flm = f(lm), frm = f(rm);
    double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    double delta = left + right - whole;
    if (depth <= 0) return left + right + delta / 15.0;
    if (std::fabs(delta) <= 15.0 * tol * (1.0 + std::fabs(left + right)))
      return left + right + delta / 15.0;
    return rec(a, m, fa, flm, fm, left, depth - 1) +
           rec(m, b, fm, frm, fb, right, depth - 1);
  }
};

double integrate(const std::function<double(double)>& f, double a, double b, double tol) {
  if (!(b > a)) return 0.0;
  // Split into panels so local features are not missed by the first probe.
  const int panels = 8;
  double h = (b - a) / panels, total = 0.0;
  Simpson s{f, tol / panels};
  for (int i = 0; i < panels; ++i) total += s.run(a + i * h, a + (i + 1) * h);
  return total;
}

// Expectation of g(s) under the standard normal, by adaptive quadrature.
double gauss_expect(const std::function<double(double)>& g, double rel_tol) {
  auto integrand = [&](double s) { return std::exp(-0.5 * s * s) / kSqrt2Pi * g(s); };
  return integrate(integrand, -10.0, 10.0, rel_tol);
}

}  // namespace

void ContinuumSpec::validate() const {
  if (assets < 1 || assets > 2)
    throw validation_error("continuum: closed forms cover 1 or 2 assets");
  if (static_cast<int>(sigma.size()) != assets)
    throw validation_error("continuum: one volatility per asset required");
  for (double s : sigma)
    if (!(s > 0.0)) throw validation_error("continuum: volatilities must be positive");
  if (!(maturity > 0.0)) throw validation_error("continuum: maturity must be positive");
  if (rate < 0.0) throw validation_error("continuum: rate must be non-negative");
  if (alpha < 0.5 || alpha > 1.0)
    throw validation_error("continuum: jump exponent alpha must lie in [1/2, 1]");
}

lattice::MarketSpec ContinuumSpec::discretize(int n) const {
  validate();
  if (n < 1) throw argument_error("continuum: need at least one step");
  const double tau = maturity / n;
  lattice::MarketSpec m;
  m.assets = assets;
  m.steps = n;
  m.rho = 1.0 + rate * tau;
  m.down.resize(assets);
  m.up.resize(assets);
  for (int j = 0; j < assets; ++j) {
    m.down[j] = 1.0 - sigma[j] * std::sqrt(tau);
    m.up[j] = 1.0 + sigma[j] * std::sqrt(tau);
    if (!(m.down[j] > 0.0)) {
      std::ostringstream msg;
      msg << "continuum: tau = " << tau << " makes d_" << (j + 1) << " <= 0";
      throw argument_error(msg.str());
    }
    if (!(m.up[j] > m.rho)) {
      std::ostringstream msg;
      msg << "continuum: tau = " << tau << " makes u_" << (j + 1) << " <= rho";
      throw argument_error(msg.str());
    }
  }
  return m;
}

double first_order_price(const TerminalPayoff& f_T, const Vec& z, double t,
                         const ContinuumSpec& spec) {
  spec.validate();
  if (t > spec.maturity) throw argument_error("first_order_price: t beyond maturity");
  const double df = std::exp(-spec.rate * (spec.maturity - t));
  Vec arg = scaled(z, df);
  return df * f_T(arg);
}

namespace {

struct KernelGeometry {
  double theta = 0.0;
  double mu1 = 0.0, mu2 = 0.0;  // log-price drifts divided by sigma
};

KernelGeometry kernel_geometry(const Vec& z, double t, const ContinuumSpec& spec) {
  spec.validate();
  if (spec.assets != 2) throw argument_error("green kernels cover two assets");
  if (z.size() != 2) throw argument_error("green kernels: need a price pair");
  if (!(t >= 0.0) || !(t < spec.maturity))
    throw argument_error("green kernels: need 0 <= t < T");
  KernelGeometry g;
  g.theta = spec.maturity - t;
  g.mu1 = spec.rate / spec.sigma[0] - spec.sigma[0] / 2.0;
  g.mu2 = spec.rate / spec.sigma[1] - spec.sigma[1] / 2.0;
  return g;
}

}  // namespace

double green_price(Kernel which, const TerminalPayoff& f_T, const Vec& z, double t,
                   const ContinuumSpec& spec, double rel_tol) {
  auto g = kernel_geometry(z, t, spec);
  const double s1 = spec.sigma[0], s2 = spec.sigma[1];
  const double sq = std::sqrt(g.theta);
  // a = (1/s1) log(w1/z1) is N(mu1 theta, theta); the Dirac factor pins the
  // second log displacement: b = (mu1+mu2) theta - a for the upper kernel
  // (anti-correlated legs), b = a + (mu2-mu1) theta for the lower.
  auto value = gauss_expect(
      [&](double s) {
        double a = g.mu1 * g.theta + sq * s;
        double b = which == Kernel::upper ? (g.mu1 + g.mu2) * g.theta - a
                                          : a + (g.mu2 - g.mu1) * g.theta;
        Vec w{z[0] * std::exp(s1 * a), z[1] * std::exp(s2 * b)};
        return f_T(w);
      },
      rel_tol);
  return std::exp(-spec.rate * g.theta) * value;
}

double green_mass(Kernel which, const Vec& z, double t, const ContinuumSpec& spec,
                  double rel_tol) {
  return green_price(which, [](std::span<const double>) { return 1.0; }, z, t, spec, rel_tol);
}

double independent_price(const TerminalPayoff& f_T, const Vec& z, double t,
                         const ContinuumSpec& spec, double rel_tol) {
  spec.validate();
  const double theta = spec.maturity - t;
  if (!(theta >= 0.0)) throw argument_error("independent_price: t beyond maturity");
  if (theta == 0.0) return f_T(z);
  const double df = std::exp(-spec.rate * theta);
  const double sq = std::sqrt(theta);
  if (spec.assets == 1) {
    const double drift = (spec.rate - 0.5 * spec.sigma[0] * spec.sigma[0]) * theta;
    double v = gauss_expect(
        [&](double s) {
          Vec w{z[0] * std::exp(drift + spec.sigma[0] * sq * s)};
          return f_T(w);
        },
        rel_tol);
    return df * v;
  }
  const double d1 = (spec.rate - 0.5 * spec.sigma[0] * spec.sigma[0]) * theta;
  const double d2 = (spec.rate - 0.5 * spec.sigma[1] * spec.sigma[1]) * theta;
  double v = gauss_expect(
      [&](double x) {
        double w1 = z[0] * std::exp(d1 + spec.sigma[0] * sq * x);
        return gauss_expect(
            [&](double y) {
              Vec w{w1, z[1] * std::exp(d2 + spec.sigma[1] * sq * y)};
              return f_T(w);
            },
            rel_tol);
      },
      rel_tol);
  return df * v;
}

PdeGrid make_grid(const ContinuumSpec& spec, const Vec& z_center, double half_width_sigmas,
                  int points_per_axis, const TerminalPayoff& f_T) {
  spec.validate();
  PdeGrid grid;
  grid.assets = spec.assets;
  const double sqT = std::sqrt(spec.maturity);
  auto axis = [&](int j) {
    std::vector<double> ax(points_per_axis);
    double c = std::log(z_center[j]);
    double w = half_width_sigmas * spec.sigma[j] * sqT + spec.rate * spec.maturity;
    for (int i = 0; i < points_per_axis; ++i)
      ax[i] = c - w + 2.0 * w * i / (points_per_axis - 1);
    return ax;
  };
  grid.y1 = axis(0);
  if (spec.assets == 2) grid.y2 = axis(1);
  const std::size_t n1 = grid.y1.size(), n2 = spec.assets == 2 ? grid.y2.size() : 1;
  grid.values.resize(n1 * n2);
  for (std::size_t i = 0; i < n1; ++i)
    for (std::size_t j = 0; j < n2; ++j) {
      Vec w(spec.assets);
      w[0] = std::exp(grid.y1[i]);
      if (spec.assets == 2) w[1] = std::exp(grid.y2[j]);
      grid.values[i * n2 + j] = f_T(w);
    }
  return grid;
}

void nonlinear_pde_step(PdeGrid& grid, const ContinuumSpec& spec, double dt, bool maximize) {
  const int J = spec.assets;
  const double r = spec.rate;
  const double s1 = spec.sigma[0];
  const double s2 = J == 2 ? spec.sigma[1] : 0.0;
  const double smax = std::max(s1, s2);
  const double dy1 = grid.y1[1] - grid.y1[0];
  const double dy2 = J == 2 ? grid.y2[1] - grid.y2[0] : dy1;
  const double dymin = std::min(dy1, dy2);
  if (dt > 0.4 * dymin * dymin / (smax * smax) * (1.0 + 1e-12))
    throw validation_error("pde step: dt violates the stability bound 0.4 dy^2 / sigma_max^2");

  const std::size_t n1 = grid.y1.size(), n2 = J == 2 ? grid.y2.size() : 1;
  std::vector<double> next(grid.values.size());
  const double b1 = r - 0.5 * s1 * s1;
  const double b2 = r - 0.5 * s2 * s2;

#pragma omp parallel for schedule(static)
  for (long long raw = 0; raw < static_cast<long long>(n1); ++raw) {
    const std::size_t i = static_cast<std::size_t>(raw);
    for (std::size_t j = 0; j < n2; ++j) {
      auto V = [&](std::size_t a, std::size_t b) { return grid.values[a * n2 + b]; };
      const double here = V(i, j);
      // Upwind first derivatives, frozen at the rim.
      double g1;
      if (b1 >= 0.0)
        g1 = i + 1 < n1 ? (V(i + 1, j) - here) / dy1 : (here - V(i - 1, j)) / dy1;
      else
        g1 = i > 0 ? (here - V(i - 1, j)) / dy1 : (V(i + 1, j) - here) / dy1;
      double g2 = 0.0;
      if (J == 2) {
        if (b2 >= 0.0)
          g2 = j + 1 < n2 ? (V(i, j + 1) - here) / dy2 : (here - V(i, j - 1)) / dy2;
        else
          g2 = j > 0 ? (here - V(i, j - 1)) / dy2 : (V(i, j + 1) - here) / dy2;
      }
      double g11 = 0.0, g22 = 0.0, g12 = 0.0;
      const bool interior1 = i > 0 && i + 1 < n1;
      const bool interior2 = J == 2 ? (j > 0 && j + 1 < n2) : true;
      if (interior1) g11 = (V(i + 1, j) - 2.0 * here + V(i - 1, j)) / (dy1 * dy1);
      if (J == 2 && interior2)
        g22 = (V(i, j + 1) - 2.0 * here + V(i, j - 1)) / (dy2 * dy2);
      if (J == 2 && interior1 && interior2)
        g12 = (V(i + 1, j + 1) + V(i - 1, j - 1) - V(i + 1, j - 1) - V(i - 1, j + 1)) /
              (4.0 * dy1 * dy2);

      // Second-order term: the candidate measures reach correlation +-1 in
      // the limit, so the extremum picks the sign of the mixed derivative.
      double second = s1 * s1 * g11;
      if (J == 2) {
        double cross = 2.0 * s1 * s2 * g12;
        second += s2 * s2 * g22 + (maximize ? std::fabs(cross) : -std::fabs(cross));
      }
      double df_dt = r * here - b1 * g1 - (J == 2 ? b2 * g2 : 0.0) - 0.5 * second;
      next[i * n2 + j] = here - dt * df_dt;
    }
  }
  grid.values.swap(next);
}

double pde_price(Kernel which, const TerminalPayoff& f_T, const Vec& z, double t,
                 const ContinuumSpec& spec, int points_per_axis, double half_width_sigmas) {
  spec.validate();
  const double theta = spec.maturity - t;
  if (theta <= 0.0) return f_T(z);
  PdeGrid grid = make_grid(spec, z, half_width_sigmas, points_per_axis, f_T);
  const double smax = *std::max_element(spec.sigma.begin(), spec.sigma.end());
  const double dy = grid.y1[1] - grid.y1[0];
  const double dt_cap = 0.4 * dy * dy / (smax * smax);
  const int steps = std::max(1, static_cast<int>(std::ceil(theta / dt_cap)));
  const double dt = theta / steps;
  for (int s = 0; s < steps; ++s)
    nonlinear_pde_step(grid, spec, dt, which == Kernel::upper);
  // The grid is centered on log z.
  const std::size_t n2 = spec.assets == 2 ? grid.y2.size() : 1;
  return grid.values[(grid.y1.size() / 2) * n2 + (spec.assets == 2 ? grid.y2.size() / 2 : 0)];
}

double duhamel_cost_price(const TerminalPayoff& f_T, const Vec& z, double t,
                          const ContinuumSpec& spec,
                          const std::function<double(std::span<const double>)>& psi,
                          double rel_tol) {
  spec.validate();
  if (spec.alpha != 1.0)
    throw precondition_error("duhamel cost correction applies to the alpha = 1 regime");
  double base = first_order_price(f_T, z, t, spec);
  if (!psi) return base;
  auto integrand = [&](double s) {
    double df = std::exp(-spec.rate * (s - t));
    Vec arg = scaled(z, df);
    return df * psi(arg);
  };
  return base + integrate(integrand, t, spec.maturity, rel_tol);
}

ConvergenceReport convergence_harness(const payoffs::Payoff& p, const ContinuumSpec& spec,
                                      std::span<const int> step_counts, const Vec& z0) {
  spec.validate();
  if (spec.assets != p.assets)
    throw validation_error("convergence: payoff and spec asset counts differ");
  if (!p.submodular.value_or(false) || !p.convex.value_or(false))
    throw precondition_error("convergence harness expects a convex sub-modular payoff");

  TerminalPayoff terminal = [&p](std::span<const double> w) { return p(w); };
  ConvergenceReport rep;
  double continuum = spec.assets == 2 ? green_price(Kernel::upper, terminal, z0, 0.0, spec)
                                      : independent_price(terminal, z0, 0.0, spec);
  rep.continuum_price = continuum;
  for (int n : step_counts) {
    auto m = spec.discretize(n);
    auto res = lattice::price_european(p, z0, m);
    ConvergenceRow row;
    row.steps = n;
    row.tau = spec.maturity / n;
    row.discrete = res.price;
    row.continuum = continuum;
    row.error = std::fabs(res.price - continuum);
    rep.rows.push_back(row);
  }
  for (std::size_t i = 1; i < rep.rows.size(); ++i)
    if (rep.rows[i].error > rep.rows[i - 1].error) rep.monotone = false;
  // Least-squares slope of log error against log tau.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int used = 0;
  for (const auto& row : rep.rows) {
    if (row.error <= 0.0) continue;
    double x = std::log(row.tau), y = std::log(row.error);
    sx += x; sy += y; sxx += x * x; sxy += x * y;
    ++used;
  }
  if (used >= 2) rep.empirical_order = (used * sxy - sx * sy) / (used * sxx - sx * sx);
  return rep;
}

}  // namespace rainbow::continuum
