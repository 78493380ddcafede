#ifndef RAINBOW_SUBMODULAR_HPP
#define RAINBOW_SUBMODULAR_HPP

// Closed-form Bellman steps for convex sub-modular payoffs: the two-branch
// J=2 form, the kappa=0 two-color binomial sum, and the J=3 case table.
// They are fast paths for the lattice and independent oracles for the
// general engine.

#include <functional>
#include <optional>
#include <span>

#include "rainbow/lattice.hpp"

namespace rainbow::submodular {

using ValueFn = std::function<double(std::span<const double>)>;

enum class TwoColorBranch { kappa_nonneg, kappa_nonpos, boundary };

struct TwoColorCoefficients {
  double kappa = 0.0;
  double q1 = 0.0, q2 = 0.0;  // marginals (rho - d_j) / (u_j - d_j)
  TwoColorBranch branch = TwoColorBranch::boundary;
};

TwoColorCoefficients two_color_coefficients(const lattice::MarketSpec& m);

struct TwoColorStep {
  double value = 0.0;
  double gamma1 = 0.0, gamma2 = 0.0;
};

// One application of the operator for J=2 convex sub-modular f. Inside the
// kappa ~ 0 band both branches are evaluated and must agree.
TwoColorStep two_color_step(const ValueFn& f, std::span<const double> z,
                            const lattice::MarketSpec& m);

// kappa = 0 closed form: the two-color binomial sum, returned at price level
// (the rho^-n discount included). Throws a precondition error off kappa = 0.
double two_color_crr(const ValueFn& f, std::span<const double> z0,
                     const lattice::MarketSpec& m, int n);

enum class ThreeColorCase {
  linear_low,      // alpha_123 >= 0
  linear_high,     // alpha_123 <= -1
  mixed_all_pos,   // 0 > alpha_123 > -1, all pairwise alphas >= 0
  mixed_one_neg,   // exactly one pairwise alpha <= 0
  mixed_two_neg,   // exactly two pairwise alphas <= 0
  uncovered        // outside the printed table; use the general engine
};

struct ThreeColorCoefficients {
  double a123 = 0.0;
  double a12 = 0.0, a13 = 0.0, a23 = 0.0;
  ThreeColorCase tag = ThreeColorCase::uncovered;
};

ThreeColorCoefficients three_color_coefficients(const lattice::MarketSpec& m);

// One application of the operator for J=3 convex sub-modular f; nullopt when
// the coefficient pattern falls outside the printed cases.
std::optional<double> three_color_step(const ValueFn& f, std::span<const double> z,
                                       const lattice::MarketSpec& m);

}  // namespace rainbow::submodular

#endif
