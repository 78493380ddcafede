#ifndef RAINBOW_MINMAX_HPP
#define RAINBOW_MINMAX_HPP

// The four finite minmax functionals over extreme risk-neutral measures:
// upper, lower, additive-cost and fully nonlinear. Each candidate measure is
// an extreme point of the risk-neutral laws on the vertex family; the value
// is an extremum of the candidate expectations.

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "rainbow/geometry.hpp"

namespace rainbow::minmax {

struct VertexValuation {
  std::vector<Vec> vectors;    // k non-vanishing vectors in R^d
  std::vector<double> values;  // f(xi_i)
  // Nonlinear case: f(xi_i, gamma). `lipschitz` is the caller's bound on the
  // gamma-Lipschitz constant, checked against min(kappa1, kappa2).
  std::function<double(int, std::span<const double>)> value_fn;
  double lipschitz = 0.0;

  int dim() const { return vectors.empty() ? 0 : static_cast<int>(vectors.front().size()); }
};

struct Candidate {
  std::vector<int> indices;  // support of the extreme measure
  double expectation = 0.0;  // E_I f
};

struct MinmaxResult {
  double value = 0.0;
  Vec gamma;
  geom::SimplexMeasure active;       // argmax/argmin measure, gamma filled in
  std::vector<Candidate> candidates; // every eligible extreme measure
};

// Enumerated extreme risk-neutral measures of a fixed vector family, cached
// for repeated evaluation against many valuations. Weights and the per-vertex
// hedge loadings depend only on the family, not on f, and a coordinate-scaled
// family z o xi shares the measure set with scaled hedge loadings.
class ExtremeMeasureSet {
public:
  struct Measure {
    std::vector<int> indices;       // d+1 supporting vertices
    std::vector<double> weights;    // risk-neutral probabilities
    std::vector<Vec> hedge_loading; // gamma = sum_i f(xi_i) * hedge_loading[i]
  };

  // Enumerates all (d+1)-subsets whose hull strictly contains the origin.
  // Throws: degeneracy when condition (i) fails, infeasible when (ii) fails.
  static ExtremeMeasureSet build(std::vector<Vec> vectors);

  const std::vector<Measure>& measures() const { return measures_; }
  const std::vector<Vec>& vectors() const { return vectors_; }
  int dim() const { return dim_; }

  double expectation(int measure, std::span<const double> values) const;
  // Deterministic argmax/argmin with the lexicographically-smallest tie rule.
  int arg_extremum(std::span<const double> values, bool maximize) const;
  // Hedge vector of a measure for given vertex values (unscaled coordinates).
  Vec gamma(int measure, std::span<const double> values) const;

private:
  std::vector<Vec> vectors_;
  std::vector<Measure> measures_;
  int dim_ = 0;
};

// min over gamma of max_i [f(xi_i) - (xi_i, gamma)].
MinmaxResult upper_minmax(const VertexValuation& v);

// max over gamma of min_i [f(xi_i) - (xi_i, gamma)] (the mirror functional,
// mapped to the centered form: the same candidate set with min instead).
MinmaxResult lower_minmax(const VertexValuation& v);

// min over gamma of max_i [f(xi_i) - (xi_i, gamma) + g(gamma)]. `cost_slope`
// bounds the directional derivatives of g and gates the theorem.
MinmaxResult costed_minmax(const VertexValuation& v,
                           const std::function<double(std::span<const double>)>& cost,
                           double cost_slope);

struct FixedPointOptions {
  int max_iterations = 200;
  double tolerance = 1e-12;
};

// min over gamma of max_i [f(xi_i, gamma) - (xi_i, gamma)]; per candidate the
// optimal gamma is the unique fixed point of the rotor-weighted expectation.
MinmaxResult nonlinear_minmax(const VertexValuation& v, FixedPointOptions opts = {});

}  // namespace rainbow::minmax

#endif
