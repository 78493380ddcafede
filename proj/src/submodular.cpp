#include "rainbow/submodular.hpp"

#include <cmath>
#include <sstream>

namespace rainbow::submodular {

namespace {

constexpr double kBoundaryBand = 1e-12;

double binomial(int n, int k) {
  double c = 1.0;
  for (int i = 0; i < k; ++i) c = c * (n - i) / (i + 1);
  return c;
}

}  // namespace

TwoColorCoefficients two_color_coefficients(const lattice::MarketSpec& m) {
  if (m.assets != 2) throw argument_error("two_color: needs J = 2");
  m.validate();
  TwoColorCoefficients c;
  c.q1 = (m.rho - m.down[0]) / (m.up[0] - m.down[0]);
  c.q2 = (m.rho - m.down[1]) / (m.up[1] - m.down[1]);
  c.kappa = 1.0 - c.q1 - c.q2;
  if (std::fabs(c.kappa) <= kBoundaryBand)
    c.branch = TwoColorBranch::boundary;
  else
    c.branch = c.kappa > 0 ? TwoColorBranch::kappa_nonneg : TwoColorBranch::kappa_nonpos;
  return c;
}

namespace {

TwoColorStep two_color_eval(const ValueFn& f, std::span<const double> z,
                            const lattice::MarketSpec& m, const TwoColorCoefficients& c,
                            bool nonneg_branch) {
  const double d1 = m.down[0], u1 = m.up[0], d2 = m.down[1], u2 = m.up[1];
  const double z1 = z[0], z2 = z[1];
  const double fud = f(Vec{u1 * z1, d2 * z2});
  const double fdu = f(Vec{d1 * z1, u2 * z2});
  TwoColorStep out;
  if (nonneg_branch) {
    const double fdd = f(Vec{d1 * z1, d2 * z2});
    out.value = c.q1 * fud + c.q2 * fdu + c.kappa * fdd;
    out.gamma1 = (fud - fdd) / (z1 * (u1 - d1));
    out.gamma2 = (fdu - fdd) / (z2 * (u2 - d2));
  } else {
    const double fuu = f(Vec{u1 * z1, u2 * z2});
    out.value = (1.0 - c.q1) * fdu + (1.0 - c.q2) * fud + std::fabs(c.kappa) * fuu;
    out.gamma1 = (fuu - fdu) / (z1 * (u1 - d1));
    out.gamma2 = (fuu - fud) / (z2 * (u2 - d2));
  }
  return out;
}

}  // namespace

TwoColorStep two_color_step(const ValueFn& f, std::span<const double> z,
                            const lattice::MarketSpec& m) {
  auto c = two_color_coefficients(m);
  switch (c.branch) {
    case TwoColorBranch::kappa_nonneg:
      return two_color_eval(f, z, m, c, true);
    case TwoColorBranch::kappa_nonpos:
      return two_color_eval(f, z, m, c, false);
    case TwoColorBranch::boundary: {
      auto lo = two_color_eval(f, z, m, c, true);
      auto hi = two_color_eval(f, z, m, c, false);
      double scale = 1.0 + std::max(std::fabs(lo.value), std::fabs(hi.value));
      if (std::fabs(lo.value - hi.value) > 1e-9 * scale) {
        std::ostringstream msg;
        msg << "two_color_step: branches disagree at kappa ~ 0 (" << lo.value << " vs "
            << hi.value << ")";
        throw numeric_error(msg.str());
      }
      return lo;
    }
  }
  return {};
}

double two_color_crr(const ValueFn& f, std::span<const double> z0,
                     const lattice::MarketSpec& m, int n) {
  auto c = two_color_coefficients(m);
  if (std::fabs(c.kappa) > kBoundaryBand) {
    std::ostringstream msg;
    msg << "two_color_crr: requires kappa = 0, got " << c.kappa;
    throw precondition_error(msg.str());
  }
  if (n < 0) throw argument_error("two_color_crr: negative step count");
  const double d1 = m.down[0], u1 = m.up[0], d2 = m.down[1], u2 = m.up[1];
  double sum = 0.0;
  for (int k = 0; k <= n; ++k) {
    double w = binomial(n, k) * std::pow(c.q1, k) * std::pow(c.q2, n - k);
    sum += w * f(Vec{std::pow(u1, k) * std::pow(d1, n - k) * z0[0],
                     std::pow(d2, k) * std::pow(u2, n - k) * z0[1]});
  }
  return sum / std::pow(m.rho, n);
}

ThreeColorCoefficients three_color_coefficients(const lattice::MarketSpec& m) {
  if (m.assets != 3) throw argument_error("three_color: needs J = 3");
  m.validate();
  ThreeColorCoefficients c;
  double a[3];
  for (int j = 0; j < 3; ++j) a[j] = (m.up[j] - m.rho) / (m.up[j] - m.down[j]);
  c.a123 = 1.0 - a[0] - a[1] - a[2];
  c.a12 = 1.0 - a[0] - a[1];
  c.a13 = 1.0 - a[0] - a[2];
  c.a23 = 1.0 - a[1] - a[2];
  const double band = kBoundaryBand;
  if (c.a123 >= -band) {
    c.tag = ThreeColorCase::linear_low;
  } else if (c.a123 <= -1.0 + band) {
    c.tag = ThreeColorCase::linear_high;
  } else {
    int negatives = (c.a12 < -band) + (c.a13 < -band) + (c.a23 < -band);
    if (negatives == 0)
      c.tag = ThreeColorCase::mixed_all_pos;
    else if (negatives == 1)
      c.tag = ThreeColorCase::mixed_one_neg;
    else if (negatives == 2)
      c.tag = ThreeColorCase::mixed_two_neg;
    else
      c.tag = ThreeColorCase::uncovered;  // all pairwise alphas negative
  }
  return c;
}

namespace {

// f_I(z): f at xi o z with xi_j = d_j for j in I and u_j otherwise.
double f_at(const ValueFn& f, std::span<const double> z, const lattice::MarketSpec& m,
            std::initializer_list<int> down_set) {
  Vec arg(3);
  for (int j = 0; j < 3; ++j) arg[j] = m.up[j] * z[j];
  for (int j : down_set) arg[j] = m.down[j] * z[j];
  return f(arg);
}

}  // namespace

std::optional<double> three_color_step(const ValueFn& f, std::span<const double> z,
                                       const lattice::MarketSpec& m) {
  auto c = three_color_coefficients(m);
  double a[3];
  for (int j = 0; j < 3; ++j) a[j] = (m.up[j] - m.rho) / (m.up[j] - m.down[j]);
  auto fI = [&](std::initializer_list<int> I) { return f_at(f, z, m, I); };

  switch (c.tag) {
    case ThreeColorCase::linear_low:
      return c.a123 * fI({}) + a[0] * fI({0}) + a[1] * fI({1}) + a[2] * fI({2});
    case ThreeColorCase::linear_high:
      return -(c.a123 + 1.0) * fI({0, 1, 2}) + (1.0 - a[0]) * fI({1, 2}) +
             (1.0 - a[1]) * fI({0, 2}) + (1.0 - a[2]) * fI({0, 1});
    case ThreeColorCase::mixed_all_pos: {
      double v1 = -c.a123 * fI({0, 1}) + c.a13 * fI({1}) + c.a23 * fI({0}) + a[2] * fI({2});
      double v2 = -c.a123 * fI({0, 2}) + c.a12 * fI({2}) + c.a23 * fI({0}) + a[1] * fI({1});
      double v3 = -c.a123 * fI({1, 2}) + c.a12 * fI({2}) + c.a13 * fI({1}) + a[0] * fI({0});
      return std::max({v1, v2, v3});
    }
    case ThreeColorCase::mixed_one_neg: {
      // Permutation {i,j,k} with alpha_ij <= 0, alpha_jk >= 0, alpha_ik >= 0.
      int i, j, k;
      if (c.a12 < 0) { i = 0; j = 1; k = 2; }
      else if (c.a13 < 0) { i = 0; j = 2; k = 1; }
      else { i = 1; j = 2; k = 0; }
      double aij = 1.0 - a[i] - a[j];
      double aik = 1.0 - a[i] - a[k];
      double ajk = 1.0 - a[j] - a[k];
      auto fset = [&](std::initializer_list<int> I) { return f_at(f, z, m, I); };
      double v1 = -c.a123 * fset({i, j}) + aik * fset({j}) + ajk * fset({i}) + a[k] * fset({k});
      double v2 = ajk * fset({i}) + (-aij) * fset({i, j}) + a[k] * fset({i, k}) +
                  (1.0 - a[i]) * fset({j});
      double v3 = aik * fset({j}) + (-aij) * fset({i, j}) + a[k] * fset({j, k}) +
                  (1.0 - a[j]) * fset({i});
      return std::max({v1, v2, v3});
    }
    case ThreeColorCase::mixed_two_neg: {
      // Permutation {i,j,k} with alpha_ij >= 0, alpha_jk <= 0, alpha_ik <= 0:
      // the two negative pairs share the index k.
      int i, j, k;
      if (c.a12 >= 0) { i = 0; j = 1; k = 2; }
      else if (c.a13 >= 0) { i = 0; j = 2; k = 1; }
      else { i = 1; j = 2; k = 0; }
      double aij = 1.0 - a[i] - a[j];
      double aik = 1.0 - a[i] - a[k];
      double ajk = 1.0 - a[j] - a[k];
      auto fset = [&](std::initializer_list<int> I) { return f_at(f, z, m, I); };
      double v1 = aij * fset({k}) + (-ajk) * fset({j, k}) + a[i] * fset({i, k}) +
                  (1.0 - a[k]) * fset({j});
      double v2 = aij * fset({k}) + (-aik) * fset({i, k}) + a[j] * fset({j, k}) +
                  (1.0 - a[k]) * fset({i});
      double v3 = (c.a123 + 1.0) * fset({k}) - ajk * fset({j, k}) - aik * fset({i, k}) +
                  (1.0 - a[k]) * fset({i, j});
      return std::max({v1, v2, v3});
    }
    case ThreeColorCase::uncovered:
      return std::nullopt;
  }
  return std::nullopt;
}

}  // namespace rainbow::submodular
