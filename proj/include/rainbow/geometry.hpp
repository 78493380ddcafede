#ifndef RAINBOW_GEOMETRY_HPP
#define RAINBOW_GEOMETRY_HPP

// Exact small-dimension affine geometry for jump families: oriented volumes,
// rotors, risk-neutral weights on simplices, general-position checks and the
// spread characteristics (kappa1, kappa2, delta) that gate the cost and
// nonlinear extensions.

#include <optional>
#include <span>
#include <vector>

#include "rainbow/linalg.hpp"

namespace rainbow::geom {

// Oriented volume of the parallelepiped spanned by d vectors of length d
// (the determinant of the matrix whose rows are the vectors).
double oriented_volume(std::span<const Vec> vectors);

// Generalized cross product of d-1 vectors in R^d: the formal cofactor
// expansion along a first row of basis vectors. For d=2, rotor({u}) =
// (u2, -u1); for d=3 it is the usual cross product.
Vec rotor(std::span<const Vec> vectors);

// rotor_tilde(u_1..u_d) = rotor(u_2-u_1, ..., u_d-u_1).
Vec rotor_tilde(std::span<const Vec> vectors);

// A probability law supported on d+1 vectors whose barycenter is the origin,
// together with (optionally) the hedge vector of a valuation on its support.
struct SimplexMeasure {
  std::vector<int> indices;     // positions in the source family
  std::vector<double> weights;  // strictly positive, sum to 1
  Vec gamma;                    // empty until a valuation fixes it
};

// Unique risk-neutral weights on a family of exactly d+1 vectors.
// Requires the origin strictly interior to the convex hull; throws an
// infeasible error otherwise and a degeneracy error when a d-subset of the
// family is linearly dependent.
SimplexMeasure simplex_risk_neutral(std::span<const Vec> family);

// Signed barycentric weights of the origin w.r.t. d+1 vectors, without any
// feasibility requirement. Returns nullopt when the affine span degenerates.
std::optional<Vec> origin_barycentric(std::span<const Vec> family);

struct GeneralPositionReport {
  bool no_dependent_subset = false;  // condition (i)
  bool positively_spanning = false;  // condition (ii): no separating half-space
  std::vector<int> dependent_subset; // witness when (i) fails
  Vec separating_direction;          // witness when (ii) fails
  bool in_general_position() const { return no_dependent_subset && positively_spanning; }
};

// Checks conditions (i) and (ii) for a family of k >= d+1 vectors in R^d.
GeneralPositionReport is_general_position(std::span<const Vec> family, int dim);

struct SpreadCharacteristics {
  double kappa1 = 0.0;  // worst half-space separation over subfamilies
  double kappa2 = 0.0;  // min origin distance to affine spans of d-subsets
  double delta = 1.0;   // coordinate ratio of the reference scaling
};

// kappa1 and kappa2 of a family in general position. kappa2 is the minimum
// of |D|/||rotor_tilde|| over d-subsets; kappa1 is the minimum, over maximal
// subfamilies contained in an open half-space, of the distance from the
// origin to their convex hull.
SpreadCharacteristics spread_characteristics(std::span<const Vec> family);

// delta(z) = max_i z_i / min_i z_i for strictly positive z.
double coordinate_ratio(std::span<const double> z);

struct ScalingBounds {
  double kappa1_lower = 0.0;
  double kappa2_lower = 0.0;
};

// Lower bounds for the characteristics of the coordinate-scaled family
// {z o xi_i}: kappa1(z) >= |z| kappa1 / (d delta(z)) and
// kappa2(z) >= |z| kappa2 / (sqrt(d) delta(z)).
ScalingBounds scaling_bounds(const SpreadCharacteristics& spread, std::span<const double> z);

// Distance from the origin to the convex hull of a finite point set
// (exact active-set enumeration; dimensions are tiny).
double distance_to_hull(std::span<const Vec> points);

// Scale-aware degeneracy test for a d-subset: |D| < tol * prod ||rows||.
bool is_degenerate_subset(std::span<const Vec> vectors, double tol = 1e-9);

}  // namespace rainbow::geom

#endif
