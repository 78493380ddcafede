#ifndef RAINBOW_LATTICE_HPP
#define RAINBOW_LATTICE_HPP

// Reduced Bellman operators and n-step backward induction over the vertex
// lattice: European, American, lower-price, path-dependent, nonlinear-jump
// and transaction-cost variants, plus hedge strategy extraction.
//
// Two interchangeable engines price the recombining lattice: an OpenMP
// kernel that enumerates the extreme measures once and sweeps each time
// slice in parallel, and a serial reference that re-solves the minmax from
// scratch at every node. They must agree and are benchmarked against each
// other.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rainbow/minmax.hpp"
#include "rainbow/payoffs.hpp"

namespace rainbow::lattice {

struct MarketSpec {
  int assets = 1;            // J
  std::vector<double> down;  // d_j
  std::vector<double> up;    // u_j
  double rho = 1.0;          // per-step interest factor
  int steps = 0;             // n

  // Time-dependent variant: factors per step (size n x J); when non-empty
  // they replace `down`/`up` and force the non-recombining engine.
  std::vector<std::vector<double>> down_steps, up_steps;

  // Nonlinear-jump variant: k maps from positive price vectors to positive
  // price vectors.
  std::vector<std::function<Vec(const Vec&)>> jump_maps;

  bool time_dependent() const { return !down_steps.empty() || !up_steps.empty(); }
  double down_at(int step, int asset) const;
  double up_at(int step, int asset) const;
  void validate() const;  // throws validation errors naming the invariant
};

struct CostModel {
  // g(delta_gamma, z): cost of moving the hedge by delta_gamma at prices z.
  std::function<double(std::span<const double>, std::span<const double>)> cost;
  double beta = 0.0;  // Lipschitz constant of g in its first argument, per |z|
};

CostModel proportional_costs(double beta);

enum class Engine { serial_reference, parallel };
enum class FastPath { automatic, on, off };

struct StepTable {
  // Entries per node: 1 for the plain variants; the costed engine stores one
  // continuation value and hedge per extreme measure.
  int per_node = 1;
  std::vector<double> value;      // node-major, price scale
  std::vector<double> gamma;      // node-major, `assets` doubles per entry
  std::vector<int> active;        // measure index per node (-1 at maturity)
  std::vector<std::uint8_t> exercised;  // American only
};

struct HedgeResult {
  double price = 0.0;
  std::string variant;
  int assets = 0;
  int steps = 0;
  Vec z0;
  MarketSpec market;  // with any interest perturbation applied
  std::vector<StepTable> tables;                 // recombining engines only
  std::vector<std::vector<int>> measure_supports;  // vertex ids per measure
  std::vector<std::size_t> active_histogram;     // nodes per active measure
  std::vector<std::string> warnings;
  std::size_t node_count = 0;
  double elapsed_seconds = 0.0;
  // Gate values and the cost model retained by the costed variant.
  double kappa1 = 0.0, kappa2 = 0.0, beta_bound = 0.0;
  CostModel cost_model;

  bool has_tables() const { return !tables.empty(); }
  std::size_t node_index(int step, std::span<const int> up_counts) const;
  const StepTable& table(int step) const { return tables.at(step); }
  Vec node_prices(int step, std::span<const int> up_counts) const;
};

struct StepResult {
  double value = 0.0;  // operator value, undiscounted
  Vec gamma;
  geom::SimplexMeasure active;
  bool perturbed = false;  // interest factor nudged off a degenerate layout
};

// One application of the reduced operator at a point: builds the 2^J vertex
// family at z and maximizes the extreme-measure expectations of f(xi o z).
StepResult bellman_step(const std::function<double(std::span<const double>)>& f,
                        const Vec& z, const MarketSpec& m);
// Same recursion with min over the extreme measures.
StepResult bellman_step_lower(const std::function<double(std::span<const double>)>& f,
                              const Vec& z, const MarketSpec& m);

HedgeResult price_european(const payoffs::Payoff& p, const Vec& z0, const MarketSpec& m,
                           Engine engine = Engine::parallel,
                           FastPath fast_path = FastPath::automatic);
HedgeResult price_american(const payoffs::Payoff& p, const Vec& z0, const MarketSpec& m,
                           Engine engine = Engine::parallel,
                           FastPath fast_path = FastPath::automatic);
HedgeResult price_lower(const payoffs::Payoff& p, const Vec& z0, const MarketSpec& m,
                        Engine engine = Engine::parallel);

// Payoff on the whole price path (S_0 .. S_n). Non-recombining tree with a
// hard budget of assets*steps <= 24.
using PathPayoff = std::function<double(std::span<const Vec>)>;
HedgeResult price_path_dependent(const PathPayoff& p, const Vec& z0, const MarketSpec& m);

// Vertex set {g_i(z)} per node; market is complete when k = J+1.
HedgeResult price_nonlinear_jumps(const payoffs::Payoff& p, const Vec& z0, const MarketSpec& m);

// Backward induction on the extended state (z, v = previous hedge); the beta
// gate is checked before pricing and the bound is reported on failure.
HedgeResult price_with_costs(const payoffs::Payoff& p, const Vec& z0, const MarketSpec& m,
                             const CostModel& costs, const Vec* initial_hedge = nullptr);

// Largest admissible Lipschitz constant for the costed recursion at z0.
double cost_beta_bound(const Vec& z0, const MarketSpec& m);

// Hedge vectors along a realized vertex path (one vertex id in 0..2^J-1 per
// step). Requires a result with stored tables.
std::vector<Vec> extract_strategy(const HedgeResult& h, std::span<const int> path);

// Terminal capital minus terminal payoff when replaying the stored strategy
// from X_0 = price along a vertex path (frictionless variants).
double replay_shortfall(const HedgeResult& h, std::span<const int> path);

}  // namespace rainbow::lattice

#endif
