#ifndef RAINBOW_PAYOFFS_HPP
#define RAINBOW_PAYOFFS_HPP

// Standard rainbow payoff kinds, structural checks (convexity flags,
// sub-modularity sampling) and power-function approximation.

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rainbow/linalg.hpp"

namespace rainbow::payoffs {

enum class Kind { best_of, call_on_max, multi_strike, portfolio, spread, custom };

std::string kind_name(Kind k);

struct Payoff {
  Kind kind = Kind::custom;
  int assets = 0;
  double strike = 0.0;             // K for single-strike kinds
  std::vector<double> strikes;     // K_j for multi-strike
  std::vector<double> weights;     // n_j for portfolio
  std::function<double(std::span<const double>)> eval;
  std::optional<bool> convex;
  std::optional<bool> submodular;

  double operator()(std::span<const double> z) const { return eval(z); }
};

// max(S1, ..., SJ, K)
Payoff make_best_of(int assets, double strike);
// max(0, max(S1, ..., SJ) - K)
Payoff make_call_on_max(int assets, double strike);
// max(0, S1 - K1, ..., SJ - KJ)
Payoff make_multi_strike(std::vector<double> strikes);
// max(0, n1 S1 + ... + nJ SJ - K)
Payoff make_portfolio(std::vector<double> weights, double strike);
// max(0, (S2 - S1) - K), two assets
Payoff make_spread(double strike);
Payoff make_custom(int assets, std::function<double(std::span<const double>)> eval);

struct Box {
  std::vector<double> lo, hi;
  int dim() const { return static_cast<int>(lo.size()); }
};

struct SubmodularReport {
  bool pass = true;
  double worst_violation = 0.0;  // max positive slack of the rectangle inequality
  int coord_i = -1, coord_j = -1;
  Vec witness;  // sample point of the worst violation
};

// Samples the pairwise rectangle inequality
//   f(x up y) + f(x down y) <= f(x) + f(y)
// on a per-coordinate grid over the box.
SubmodularReport check_submodular(const Payoff& p, const Box& box, int grid);

struct PowerFit {
  std::vector<int> exponents;
  double offset = 0.0;  // additive constant
  double coeff = 0.0;   // multiplier of the power term
  double sup_error = 0.0;
  Box domain;
};

// Least-max fit of offset + coeff * prod z_j^{e_j} over samples of the box,
// with integer exponents 0..budget per coordinate. sup_error is certified on
// the sample set.
PowerFit power_fit(const Payoff& p, const Box& box, int exponent_budget,
                   int samples_per_dim = 9);

// Evaluates a fitted power function.
double power_eval(const PowerFit& fit, std::span<const double> z);

}  // namespace rainbow::payoffs

#endif
