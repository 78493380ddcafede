#ifndef RAINBOW_CONTINUUM_HPP
#define RAINBOW_CONTINUUM_HPP

// Continuous-time limit tools: the first-order limit for slow jumps, the
// explicit degenerate Green functions of the two-asset sub-modular limit,
// an explicit finite-difference stepper for the nonlinear limit equation,
// the Duhamel cost correction, and a discrete-to-continuum convergence
// harness.

#include <functional>
#include <span>
#include <vector>

#include "rainbow/lattice.hpp"
#include "rainbow/payoffs.hpp"

namespace rainbow::continuum {

struct ContinuumSpec {
  int assets = 1;            // 1 or 2 for the closed forms
  std::vector<double> sigma; // per-asset volatilities
  double rate = 0.0;         // continuous risk-free rate r
  double maturity = 1.0;     // T
  double alpha = 0.5;        // jump scaling exponent in [1/2, 1]

  void validate() const;
  // Discrete market with n steps: u = 1 + sigma sqrt(tau), d = 1 - sigma
  // sqrt(tau), rho = 1 + r tau, tau = T / n.
  lattice::MarketSpec discretize(int n) const;
};

using TerminalPayoff = std::function<double(std::span<const double>)>;

// alpha > 1/2 limit: f(t, z) = e^{-r(T-t)} f_T(e^{-r(T-t)} z).
double first_order_price(const TerminalPayoff& f_T, const Vec& z, double t,
                         const ContinuumSpec& spec);

enum class Kernel { upper, lower };  // G- and G+ respectively

// Two-asset degenerate Gaussian kernel price. The Dirac factor pins one
// log-price combination; the survivor is integrated by adaptive quadrature.
double green_price(Kernel which, const TerminalPayoff& f_T, const Vec& z, double t,
                   const ContinuumSpec& spec, double rel_tol = 1e-8);

// Total kernel mass (f_T = 1); analytically e^{-r(T-t)}.
double green_mass(Kernel which, const Vec& z, double t, const ContinuumSpec& spec,
                  double rel_tol = 1e-8);

// Complete-market reference without the mixed derivative term: two
// independent log-normal factors.
double independent_price(const TerminalPayoff& f_T, const Vec& z, double t,
                         const ContinuumSpec& spec, double rel_tol = 1e-7);

// Rectangular log-price grid for the explicit finite-difference stepper.
struct PdeGrid {
  int assets = 1;
  std::vector<double> y1, y2;   // log-price axes (y2 empty when assets == 1)
  std::vector<double> values;   // row-major over (y1, y2)

  std::size_t index(int i1, int i2 = 0) const {
    return static_cast<std::size_t>(i1) * (y2.empty() ? 1 : y2.size()) + i2;
  }
  double& at(int i1, int i2 = 0) { return values[index(i1, i2)]; }
  double at(int i1, int i2 = 0) const { return values[index(i1, i2)]; }
};

PdeGrid make_grid(const ContinuumSpec& spec, const Vec& z_center, double half_width_sigmas,
                  int points_per_axis, const TerminalPayoff& f_T);

// One explicit Euler step of the backward-time limit equation; `maximize`
// selects the upper (max over measures) or lower (min) second-order term.
// dt must satisfy dt <= 0.4 dy^2 / max sigma^2.
void nonlinear_pde_step(PdeGrid& grid, const ContinuumSpec& spec, double dt, bool maximize);

// Steps the grid from maturity to time t and reads the value at z by
// bilinear interpolation in log-prices.
double pde_price(Kernel which, const TerminalPayoff& f_T, const Vec& z, double t,
                 const ContinuumSpec& spec, int points_per_axis = 161,
                 double half_width_sigmas = 6.0);

// Duhamel correction for transaction costs in the alpha = 1 regime:
// f(t,z) = e^{-r(T-t)} f_T(e^{-r(T-t)} z) + int_t^T e^{-r(s-t)} psi(e^{-r(s-t)} z) ds.
double duhamel_cost_price(const TerminalPayoff& f_T, const Vec& z, double t,
                          const ContinuumSpec& spec,
                          const std::function<double(std::span<const double>)>& psi,
                          double rel_tol = 1e-10);

struct ConvergenceRow {
  int steps = 0;
  double tau = 0.0;
  double discrete = 0.0;
  double continuum = 0.0;
  double error = 0.0;
};

struct ConvergenceReport {
  std::vector<ConvergenceRow> rows;
  double continuum_price = 0.0;
  double empirical_order = 0.0;  // slope of log error vs log tau
  bool monotone = true;          // errors decrease along the row sequence
};

// Prices the payoff on discretized markets for each step count and compares
// with the continuum reference (Green function for J=2, log-normal
// expectation for J=1).
ConvergenceReport convergence_harness(const payoffs::Payoff& p, const ContinuumSpec& spec,
                                      std::span<const int> step_counts, const Vec& z0);

}  // namespace rainbow::continuum

#endif
