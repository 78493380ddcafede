#include "rainbow/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

namespace rainbow {

Vec solve_dense(Matrix A, Vec b) {
  const std::size_t n = A.rows;
  if (A.cols != n || b.size() != n) throw argument_error("solve_dense: shape mismatch");
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    double best = std::fabs(A(col, col));
    for (std::size_t r = col + 1; r < n; ++r) {
      double v = std::fabs(A(r, col));
      if (v > best) { best = v; piv = r; }
    }
    if (best == 0.0) throw degeneracy_error("solve_dense: singular matrix");
    if (piv != col) {
      for (std::size_t j = 0; j < n; ++j) std::swap(A(piv, j), A(col, j));
      std::swap(b[piv], b[col]);
    }
    for (std::size_t r = col + 1; r < n; ++r) {
      double m = A(r, col) / A(col, col);
      if (m == 0.0) continue;
      for (std::size_t j = col; j < n; ++j) A(r, j) -= m * A(col, j);
      b[r] -= m * b[col];
    }
  }
  Vec x(n, 0.0);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t j = i + 1; j < n; ++j) s -= A(i, j) * x[j];
    x[i] = s / A(i, i);
  }
  return x;
}

double determinant(Matrix A) {
  const std::size_t n = A.rows;
  if (A.cols != n) throw argument_error("determinant: not square");
  if (n == 1) return A(0, 0);
  if (n == 2) return A(0, 0) * A(1, 1) - A(0, 1) * A(1, 0);
  if (n == 3) {
    return A(0, 0) * (A(1, 1) * A(2, 2) - A(1, 2) * A(2, 1)) -
           A(0, 1) * (A(1, 0) * A(2, 2) - A(1, 2) * A(2, 0)) +
           A(0, 2) * (A(1, 0) * A(2, 1) - A(1, 1) * A(2, 0));
  }
  double det = 1.0;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    double best = std::fabs(A(col, col));
    for (std::size_t r = col + 1; r < n; ++r) {
      double v = std::fabs(A(r, col));
      if (v > best) { best = v; piv = r; }
    }
    if (best == 0.0) return 0.0;
    if (piv != col) {
      for (std::size_t j = 0; j < n; ++j) std::swap(A(piv, j), A(col, j));
      det = -det;
    }
    det *= A(col, col);
    for (std::size_t r = col + 1; r < n; ++r) {
      double m = A(r, col) / A(col, col);
      if (m == 0.0) continue;
      for (std::size_t j = col; j < n; ++j) A(r, j) -= m * A(col, j);
    }
  }
  return det;
}

Vec solve_least_squares(const Matrix& A, const Vec& b) {
  Matrix G(A.cols, A.cols);
  Vec rhs(A.cols, 0.0);
  for (std::size_t i = 0; i < A.cols; ++i) {
    for (std::size_t j = 0; j < A.cols; ++j) {
      double s = 0.0;
      for (std::size_t r = 0; r < A.rows; ++r) s += A(r, i) * A(r, j);
      G(i, j) = s;
    }
    double s = 0.0;
    for (std::size_t r = 0; r < A.rows; ++r) s += A(r, i) * b[r];
    rhs[i] = s;
  }
  return solve_dense(std::move(G), std::move(rhs));
}

}  // namespace rainbow

namespace rainbow::geom {

namespace {

// Subfamily with one element removed, preserving order (the paper's hat).
std::vector<Vec> drop_element(std::span<const Vec> family, std::size_t skip) {
  std::vector<Vec> out;
  out.reserve(family.size() - 1);
  for (std::size_t i = 0; i < family.size(); ++i)
    if (i != skip) out.push_back(family[i]);
  return out;
}

double family_scale(std::span<const Vec> family) {
  double s = 0.0;
  for (const auto& v : family) s = std::max(s, norm(v));
  return s;
}

// Phase-1 simplex for {A q = b, q >= 0}; returns true when feasible.
// At most d+1 rows, so only Bland's rule is needed for robustness.
bool lp_feasible(Matrix A, Vec b) {
  const std::size_t m = A.rows, n = A.cols;
  for (std::size_t i = 0; i < m; ++i) {
    double rs = std::fabs(b[i]);
    for (std::size_t j = 0; j < n; ++j) rs = std::max(rs, std::fabs(A(i, j)));
    if (rs == 0.0) continue;
    for (std::size_t j = 0; j < n; ++j) A(i, j) /= rs;
    b[i] /= rs;
  }
  Matrix T(m, n + m + 1);
  for (std::size_t i = 0; i < m; ++i) {
    double s = b[i] < 0 ? -1.0 : 1.0;
    for (std::size_t j = 0; j < n; ++j) T(i, j) = s * A(i, j);
    T(i, n + i) = 1.0;
    T(i, n + m) = s * b[i];
  }
  std::vector<std::size_t> basis(m);
  for (std::size_t i = 0; i < m; ++i) basis[i] = n + i;
  // Reduced costs of the phase-1 objective; the artificial basis starts at 0.
  Vec cost(n + m, 0.0);
  double obj = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) cost[j] -= T(i, j);
    obj -= T(i, n + m);
  }
  const int max_pivots = 5000;
  for (int iter = 0; iter < max_pivots; ++iter) {
    std::size_t enter = n + m;
    for (std::size_t j = 0; j < n + m; ++j)
      if (cost[j] < -1e-11) { enter = j; break; }
    if (enter == n + m) break;
    std::size_t leave = m;
    double best_ratio = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < m; ++i) {
      if (T(i, enter) > 1e-12) {
        double ratio = T(i, n + m) / T(i, enter);
        if (ratio < best_ratio - 1e-15 ||
            (ratio < best_ratio + 1e-15 && (leave == m || basis[i] < basis[leave]))) {
          best_ratio = ratio;
          leave = i;
        }
      }
    }
    if (leave == m) break;
    double piv = T(leave, enter);
    for (std::size_t j = 0; j <= n + m; ++j) T(leave, j) /= piv;
    for (std::size_t i = 0; i < m; ++i) {
      if (i == leave) continue;
      double f = T(i, enter);
      if (f == 0.0) continue;
      for (std::size_t j = 0; j <= n + m; ++j) T(i, j) -= f * T(leave, j);
    }
    double f = cost[enter];
    for (std::size_t j = 0; j < n + m; ++j) cost[j] -= f * T(leave, j);
    obj -= f * T(leave, n + m);
    basis[leave] = enter;
  }
  return std::fabs(obj) < 1e-9;
}

struct MinNormPoint {
  Vec point;
  double dist = std::numeric_limits<double>::infinity();
  bool in_hull = false;  // barycentric coordinates all nonnegative
};

// Min-norm point of the affine hull of a point subset, with hull membership.
MinNormPoint affine_min_norm(std::span<const Vec> pts) {
  const std::size_t m = pts.size();
  const std::size_t d = pts.front().size();
  MinNormPoint out;
  if (m == 1) {
    out.point = pts[0];
    out.dist = norm(out.point);
    out.in_hull = true;
    return out;
  }
  Matrix B(d, m - 1);
  for (std::size_t j = 0; j + 1 < m; ++j)
    for (std::size_t i = 0; i < d; ++i) B(i, j) = pts[j + 1][i] - pts[0][i];
  Vec rhs(d);
  for (std::size_t i = 0; i < d; ++i) rhs[i] = -pts[0][i];
  Vec c;
  try {
    c = solve_least_squares(B, rhs);
  } catch (const Error&) {
    return out;  // affinely dependent; skip
  }
  out.point.assign(d, 0.0);
  double c0 = 1.0;
  for (std::size_t j = 0; j + 1 < m; ++j) c0 -= c[j];
  for (std::size_t i = 0; i < d; ++i) {
    double x = pts[0][i] * c0;
    for (std::size_t j = 0; j + 1 < m; ++j) x += pts[j + 1][i] * c[j];
    out.point[i] = x;
  }
  out.dist = norm(out.point);
  out.in_hull = c0 >= -1e-12;
  for (std::size_t j = 0; j + 1 < m && out.in_hull; ++j)
    if (c[j] < -1e-12) out.in_hull = false;
  return out;
}

void enumerate_subsets(int k, int size, const std::function<void(const std::vector<int>&)>& fn) {
  std::vector<int> idx(size);
  std::function<void(int, int)> rec = [&](int start, int depth) {
    if (depth == size) { fn(idx); return; }
    for (int i = start; i <= k - (size - depth); ++i) {
      idx[depth] = i;
      rec(i + 1, depth + 1);
    }
  };
  rec(0, 0);
}

// Closest point of the convex hull of the whole point set to the origin.
MinNormPoint min_norm_point_of_hull(std::span<const Vec> points) {
  const std::size_t d = points.front().size();
  MinNormPoint best;
  for (std::size_t size = 1; size <= std::min(points.size(), d + 1); ++size) {
    enumerate_subsets(static_cast<int>(points.size()), static_cast<int>(size),
                      [&](const std::vector<int>& idx) {
                        std::vector<Vec> sub;
                        sub.reserve(idx.size());
                        for (int i : idx) sub.push_back(points[i]);
                        auto mn = affine_min_norm(sub);
                        if (!mn.in_hull || mn.dist >= best.dist) return;
                        double d2 = mn.dist * mn.dist;
                        for (const auto& p : points)
                          if (dot(p, mn.point) < d2 - 1e-11 * std::max(1.0, d2)) return;
                        best = mn;
                      });
  }
  return best;
}

}  // namespace

double oriented_volume(std::span<const Vec> vectors) {
  if (vectors.empty()) throw argument_error("oriented_volume: empty family");
  const std::size_t d = vectors.front().size();
  if (vectors.size() != d) throw argument_error("oriented_volume: need d vectors of length d");
  Matrix m(d, d);
  for (std::size_t i = 0; i < d; ++i) {
    if (vectors[i].size() != d) throw argument_error("oriented_volume: ragged family");
    for (std::size_t j = 0; j < d; ++j) m(i, j) = vectors[i][j];
  }
  return determinant(std::move(m));
}

Vec rotor(std::span<const Vec> vectors) {
  const std::size_t m = vectors.size();
  const std::size_t d = m + 1;
  for (const auto& v : vectors)
    if (v.size() != d) throw argument_error("rotor: need d-1 vectors of length d");
  Vec out(d, 0.0);
  if (m == 0) {  // d = 1: the expansion along the basis row is just e_1
    out[0] = 1.0;
    return out;
  }
  std::vector<Vec> minor(m, Vec(m));
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t r = 0; r < m; ++r) {
      std::size_t cc = 0;
      for (std::size_t c = 0; c < d; ++c) {
        if (c == j) continue;
        minor[r][cc++] = vectors[r][c];
      }
    }
    double sign = (j % 2 == 0) ? 1.0 : -1.0;
    out[j] = sign * oriented_volume(minor);
  }
  return out;
}

Vec rotor_tilde(std::span<const Vec> vectors) {
  const std::size_t d = vectors.size();
  for (const auto& v : vectors)
    if (v.size() != d) throw argument_error("rotor_tilde: need d vectors of length d");
  std::vector<Vec> diffs;
  diffs.reserve(d - 1);
  for (std::size_t i = 1; i < d; ++i) diffs.push_back(sub(vectors[i], vectors[0]));
  return rotor(diffs);
}

bool is_degenerate_subset(std::span<const Vec> vectors, double tol) {
  double scale = 1.0;
  for (const auto& v : vectors) scale *= norm(v);
  if (scale == 0.0) return true;
  return std::fabs(oriented_volume(vectors)) < tol * scale;
}

std::optional<Vec> origin_barycentric(std::span<const Vec> family) {
  const std::size_t d = family.front().size();
  if (family.size() != d + 1) throw argument_error("origin_barycentric: need d+1 vectors");
  // Signed weights p_i proportional to (-1)^(i-1) D(hat xi_i); their sum is D.
  Vec signed_w(d + 1);
  double total = 0.0;
  for (std::size_t i = 0; i <= d; ++i) {
    auto hat = drop_element(family, i);
    double vol = (d == 1) ? hat[0][0] : oriented_volume(hat);
    double s = (i % 2 == 0) ? 1.0 : -1.0;
    signed_w[i] = s * vol;
    total += signed_w[i];
  }
  if (std::fabs(total) < 1e-300) return std::nullopt;
  for (auto& w : signed_w) w /= total;
  return signed_w;
}

SimplexMeasure simplex_risk_neutral(std::span<const Vec> family) {
  const std::size_t d = family.front().size();
  if (family.size() != d + 1)
    throw argument_error("simplex_risk_neutral: need exactly d+1 vectors");
  if (d > 1) {
    for (std::size_t i = 0; i <= d; ++i) {
      auto hat = drop_element(family, i);
      if (is_degenerate_subset(hat))
        throw degeneracy_error("simplex_risk_neutral: degenerate d-subset");
    }
  }
  auto maybe = origin_barycentric(family);
  if (!maybe) throw degeneracy_error("simplex_risk_neutral: degenerate family");
  Vec w = *maybe;
  for (double p : w)
    if (p <= 1e-12) throw infeasible_error("simplex_risk_neutral: origin not interior to hull");
  // The barycenter identity is the ground truth for the sign bookkeeping.
  double scale = family_scale(family);
  Vec bary(d, 0.0);
  for (std::size_t i = 0; i <= d; ++i)
    for (std::size_t j = 0; j < d; ++j) bary[j] += w[i] * family[i][j];
  if (norm(bary) > 1e-10 * std::max(scale, 1.0))
    throw degeneracy_error("simplex_risk_neutral: barycenter verification failed");
  SimplexMeasure out;
  out.indices.resize(d + 1);
  std::iota(out.indices.begin(), out.indices.end(), 0);
  out.weights = std::move(w);
  return out;
}

GeneralPositionReport is_general_position(std::span<const Vec> family, int dim) {
  const std::size_t d = static_cast<std::size_t>(dim);
  if (family.size() < d + 1)
    throw argument_error("is_general_position: need at least d+1 vectors");
  for (const auto& v : family) {
    if (v.size() != d) throw argument_error("is_general_position: dimension mismatch");
    if (norm(v) == 0.0) throw argument_error("is_general_position: vanishing vector");
  }
  GeneralPositionReport rep;
  rep.no_dependent_subset = true;
  if (d >= 1) {
    enumerate_subsets(static_cast<int>(family.size()), static_cast<int>(d),
                      [&](const std::vector<int>& idx) {
                        if (!rep.no_dependent_subset) return;
                        if (d == 1) return;  // single non-vanishing vectors are independent
                        std::vector<Vec> sub;
                        sub.reserve(d);
                        for (int i : idx) sub.push_back(family[i]);
                        if (is_degenerate_subset(sub)) {
                          rep.no_dependent_subset = false;
                          rep.dependent_subset = idx;
                        }
                      });
  }
  // Condition (ii): a full-support risk-neutral law exists
  // (p >= eps, sum p = 1, sum p xi = 0 as a phase-1 feasibility problem).
  const std::size_t k = family.size();
  const double eps = 1e-12;
  Matrix A(d + 1, k);
  Vec b(d + 1, 0.0);
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t i = 0; i < d; ++i) {
      A(i, j) = family[j][i];
      b[i] -= eps * family[j][i];
    }
    A(d, j) = 1.0;
  }
  b[d] = 1.0 - eps * static_cast<double>(k);
  rep.positively_spanning = lp_feasible(std::move(A), std::move(b));
  if (!rep.positively_spanning) {
    auto mn = min_norm_point_of_hull(family);
    if (std::isfinite(mn.dist) && mn.dist > 1e-12 * std::max(1.0, family_scale(family)))
      rep.separating_direction = scaled(mn.point, 1.0 / mn.dist);
  }
  return rep;
}

double distance_to_hull(std::span<const Vec> points) {
  auto mn = min_norm_point_of_hull(points);
  if (!std::isfinite(mn.dist)) throw numeric_error("distance_to_hull: no supporting face found");
  return mn.dist;
}

SpreadCharacteristics spread_characteristics(std::span<const Vec> family) {
  const std::size_t d = family.front().size();
  auto rep = is_general_position(family, static_cast<int>(d));
  if (!rep.in_general_position())
    throw degeneracy_error("spread_characteristics: family not in general position");

  SpreadCharacteristics out;
  out.kappa2 = std::numeric_limits<double>::infinity();
  enumerate_subsets(static_cast<int>(family.size()), static_cast<int>(d),
                    [&](const std::vector<int>& idx) {
                      std::vector<Vec> sub;
                      sub.reserve(d);
                      for (int i : idx) sub.push_back(family[i]);
                      double rt = d == 1 ? 1.0 : norm(rotor_tilde(sub));
                      if (rt == 0.0) return;
                      double h = std::fabs(d == 1 ? sub[0][0] : oriented_volume(sub)) / rt;
                      out.kappa2 = std::min(out.kappa2, h);
                    });

  // kappa1 = min over maximal subfamilies inside an open half-space of the
  // distance from the origin to their convex hull. Candidate closest points
  // are min-norm points of faces of <= d points; a candidate x* is valid when
  // every family member on the positive side of x* supports it from above.
  out.kappa1 = std::numeric_limits<double>::infinity();
  const double scale = family_scale(family);
  for (std::size_t size = 1; size <= d; ++size) {
    enumerate_subsets(static_cast<int>(family.size()), static_cast<int>(size),
                      [&](const std::vector<int>& idx) {
                        std::vector<Vec> sub;
                        sub.reserve(size);
                        for (int i : idx) sub.push_back(family[i]);
                        auto mn = affine_min_norm(sub);
                        if (!mn.in_hull || !std::isfinite(mn.dist)) return;
                        if (mn.dist <= 1e-12 * scale) return;
                        double d2 = mn.dist * mn.dist;
                        bool valid = true;
                        for (const auto& p : family) {
                          double ip = dot(p, mn.point);
                          if (ip > 1e-12 * scale * mn.dist && ip < d2 * (1.0 - 1e-10)) {
                            valid = false;
                            break;
                          }
                        }
                        if (valid) out.kappa1 = std::min(out.kappa1, mn.dist);
                      });
  }
  if (!std::isfinite(out.kappa1) || !std::isfinite(out.kappa2))
    throw degeneracy_error("spread_characteristics: characteristics undefined");
  out.delta = 1.0;
  return out;
}

double coordinate_ratio(std::span<const double> z) {
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (double v : z) {
    if (v <= 0.0) throw argument_error("coordinate_ratio: z must be strictly positive");
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return hi / lo;
}

ScalingBounds scaling_bounds(const SpreadCharacteristics& spread, std::span<const double> z) {
  const double d = static_cast<double>(z.size());
  const double dz = coordinate_ratio(z);
  const double zn = norm(z);
  ScalingBounds out;
  out.kappa1_lower = zn * spread.kappa1 / (d * dz);
  out.kappa2_lower = zn * spread.kappa2 / (std::sqrt(d) * dz);
  return out;
}

}  // namespace rainbow::geom
