#pragma once

// ---------------------------------------------------------------------------
// Sinkhorn-Knopp self-assignment. Given the cosine self-similarity S of a
// batch (m x m), the square solver produces a doubly-stochastic-to-tolerance
// assignment A:
//
//   Q <- exp(S / eps)^T / sum_total
//   repeat T times:  rows of Q -> 1/m,  columns of Q -> 1/m
//   columns of Q -> 1                  (so rows of A are exactly stochastic)
//   A <- Q^T
//
// exp(S / eps) uses a global max subtraction; the immediate global
// normalization makes that exactly output-preserving, and at eps = 0.05 it is
// the difference between e^{0} and e^{20} inside the kernel. The asymmetry of
// the final step is deliberate: rows of A sum to 1 exactly by construction,
// columns approach 1 as T grows. None of this participates in any gradient.
//
// The rectangular variant (m x K scores vs K prototypes) balances rows to 1/m
// and columns to 1/K, then makes rows exactly stochastic; column sums approach
// m/K.
// ---------------------------------------------------------------------------

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "resa/error.hpp"
#include "resa/matrix.hpp"

namespace resa {

struct SinkhornConfig {
  double epsilon = 0.05;
  std::size_t iterations = 3;
};

struct AssignmentMatrix {
  Matrix values;              // m x m, rows sum to 1
  double row_marginal_error = 0.0;  // max |row sum - 1|
  double col_marginal_error = 0.0;  // max |col sum - 1|
};

namespace detail {

// Q_ij *= target / (sum of row i); guards an underflowed all-zero row.
inline void scale_rows_to(Matrix& q, double target) {
  for (std::size_t i = 0; i < q.rows; ++i) {
    double* r = q.row(i);
    double sum = 0.0;
    for (std::size_t j = 0; j < q.cols; ++j) sum += r[j];
    const double factor = sum > 0.0 ? target / sum : 0.0;
    for (std::size_t j = 0; j < q.cols; ++j) r[j] *= factor;
  }
}

inline void scale_cols_to(Matrix& q, double target) {
  std::vector<double> sums(q.cols, 0.0);
  for (std::size_t i = 0; i < q.rows; ++i) {
    const double* r = q.row(i);
    for (std::size_t j = 0; j < q.cols; ++j) sums[j] += r[j];
  }
  for (std::size_t j = 0; j < q.cols; ++j)
    sums[j] = sums[j] > 0.0 ? target / sums[j] : 0.0;
  for (std::size_t i = 0; i < q.rows; ++i) {
    double* r = q.row(i);
    for (std::size_t j = 0; j < q.cols; ++j) r[j] *= sums[j];
  }
}

// exp((scores - global max) / eps), normalized by the total sum.
inline Matrix normalized_kernel(const Matrix& scores, double eps) {
  double hi = scores.data.empty() ? 0.0 : scores.data[0];
  for (double v : scores.data) hi = std::max(hi, v);
  Matrix q(scores.rows, scores.cols);
  double total = 0.0;
  for (std::size_t i = 0; i < q.data.size(); ++i) {
    q.data[i] = std::exp((scores.data[i] - hi) / eps);
    total += q.data[i];
  }
  for (double& v : q.data) v /= total;
  return q;
}

}  // namespace detail

inline AssignmentMatrix sinkhorn_self_assignment(const Matrix& s,
                                                 const SinkhornConfig& cfg = {}) {
  require(s.rows == s.cols, "NonSquareInput",
          "similarity matrix must be square, got " + shape_string(s));
  require(s.rows >= 1, "NonSquareInput", "similarity matrix is empty");
  require(cfg.epsilon > 0.0, "NonPositiveEpsilon",
          "epsilon must be positive, got " + std::to_string(cfg.epsilon));

  const std::size_t m = s.rows;
  Matrix q = detail::normalized_kernel(transpose(s), cfg.epsilon);
  const double uniform = 1.0 / static_cast<double>(m);
  for (std::size_t t = 0; t < cfg.iterations; ++t) {
    detail::scale_rows_to(q, uniform);
    detail::scale_cols_to(q, uniform);
  }
  detail::scale_cols_to(q, 1.0);

  AssignmentMatrix out;
  out.values = transpose(q);
  for (std::size_t i = 0; i < m; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < m; ++j) sum += out.values(i, j);
    out.row_marginal_error = std::max(out.row_marginal_error, std::fabs(sum - 1.0));
  }
  for (std::size_t j = 0; j < m; ++j) {
    double sum = 0.0;
    for (std::size_t i = 0; i < m; ++i) sum += out.values(i, j);
    out.col_marginal_error = std::max(out.col_marginal_error, std::fabs(sum - 1.0));
  }
  return out;
}

// Balanced assignment of m samples onto K prototypes. Rows sum to 1 exactly;
// column sums approach m/K as iterations grow.
inline Matrix sinkhorn_rectangular(const Matrix& scores,
                                   const SinkhornConfig& cfg = {}) {
  require(scores.rows >= 1 && scores.cols >= 1, "ShapeMismatch",
          "scores must be non-empty, got " + shape_string(scores));
  require(cfg.epsilon > 0.0, "NonPositiveEpsilon",
          "epsilon must be positive, got " + std::to_string(cfg.epsilon));

  Matrix q = detail::normalized_kernel(scores, cfg.epsilon);
  const double row_target = 1.0 / static_cast<double>(scores.rows);
  const double col_target = 1.0 / static_cast<double>(scores.cols);
  for (std::size_t t = 0; t < cfg.iterations; ++t) {
    detail::scale_rows_to(q, row_target);
    detail::scale_cols_to(q, col_target);
  }
  detail::scale_rows_to(q, 1.0);
  return q;
}

inline double mean_diagonal(const Matrix& a) {
  require(a.rows == a.cols, "NonSquareInput", "mean_diagonal needs a square matrix");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.rows; ++i) acc += a(i, i);
  return acc / static_cast<double>(a.rows);
}

}  // namespace resa
