#pragma once

// ---------------------------------------------------------------------------
// Normalization and softmax kernels shared by the assignment, objective and
// metric code. All of them treat rows as samples.
// ---------------------------------------------------------------------------

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>

#include "resa/error.hpp"
#include "resa/matrix.hpp"

namespace resa {

inline double row_norm(const Matrix& m, std::size_t i) {
  const double* r = m.row(i);
  double acc = 0.0;
  for (std::size_t j = 0; j < m.cols; ++j) acc += r[j] * r[j];
  return std::sqrt(acc);
}

// Scales every row to unit Euclidean norm. Throws ZeroRow when a row norm is
// below 1e-30 (direction undefined).
inline Matrix l2_normalize_rows(const Matrix& m) {
  Matrix out = m;
  for (std::size_t i = 0; i < m.rows; ++i) {
    const double norm = row_norm(m, i);
    if (norm < 1e-30)
      fail("ZeroRow", "row " + std::to_string(i) + " has zero norm");
    double* r = out.row(i);
    for (std::size_t j = 0; j < m.cols; ++j) r[j] /= norm;
  }
  return out;
}

// S = H H^T for row-normalized H: S_ij is the cosine of rows i and j.
// Rows must already be unit norm (checked to 1e-9). The result is exactly
// symmetric because S_ij and S_ji run the same dot product.
inline Matrix cosine_self_similarity(const Matrix& h) {
  for (std::size_t i = 0; i < h.rows; ++i) {
    if (std::fabs(row_norm(h, i) - 1.0) > 1e-9)
      fail("NotNormalized", "row " + std::to_string(i) + " is not unit norm");
  }
  return matmul_bt(h, h);
}

// Row-wise softmax of M / tau with per-row max subtraction.
inline Matrix softmax_rows(const Matrix& m, double tau) {
  require(tau > 0.0, "NonPositiveTau", "tau must be positive, got " + std::to_string(tau));
  Matrix out(m.rows, m.cols);
  for (std::size_t i = 0; i < m.rows; ++i) {
    const double* in = m.row(i);
    double* r = out.row(i);
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m.cols; ++j) hi = std::max(hi, in[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < m.cols; ++j) {
      r[j] = std::exp((in[j] - hi) / tau);
      sum += r[j];
    }
    for (std::size_t j = 0; j < m.cols; ++j) r[j] /= sum;
  }
  return out;
}

// Row-wise log-softmax of M / tau; same stabilization, kept separate so the
// losses can take logs without round-tripping through exp.
inline Matrix log_softmax_rows(const Matrix& m, double tau) {
  require(tau > 0.0, "NonPositiveTau", "tau must be positive, got " + std::to_string(tau));
  Matrix out(m.rows, m.cols);
  for (std::size_t i = 0; i < m.rows; ++i) {
    const double* in = m.row(i);
    double* r = out.row(i);
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m.cols; ++j) hi = std::max(hi, in[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < m.cols; ++j) sum += std::exp((in[j] - hi) / tau);
    const double log_denom = std::log(sum);
    for (std::size_t j = 0; j < m.cols; ++j) r[j] = (in[j] - hi) / tau - log_denom;
  }
  return out;
}

}  // namespace resa
