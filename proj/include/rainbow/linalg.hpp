#ifndef RAINBOW_LINALG_HPP
#define RAINBOW_LINALG_HPP

// Small dense vector/matrix helpers. Everything here is sized by the number
// of assets (<= 4 in practice), so plain std::vector storage is fine.

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "rainbow/errors.hpp"

namespace rainbow {

using Vec = std::vector<double>;

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline Vec sub(std::span<const double> a, std::span<const double> b) {
  Vec r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
  return r;
}

inline Vec scaled(std::span<const double> a, double c) {
  Vec r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = c * a[i];
  return r;
}

inline Vec hadamard(std::span<const double> a, std::span<const double> b) {
  Vec r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] * b[i];
  return r;
}

// Row-major dense matrix, n x m.
struct Matrix {
  std::size_t rows = 0, cols = 0;
  std::vector<double> a;
  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}
  double& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return a[i * cols + j]; }
};

// Solves A x = b in place by Gaussian elimination with partial pivoting.
// Throws a degeneracy error when a pivot collapses.
Vec solve_dense(Matrix A, Vec b);

// Determinant by LU with partial pivoting (square A consumed).
double determinant(Matrix A);

// Least squares min ||A x - b|| via normal equations (A tall, full rank).
Vec solve_least_squares(const Matrix& A, const Vec& b);

}  // namespace rainbow

#endif
