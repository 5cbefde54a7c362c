#pragma once

// ---------------------------------------------------------------------------
// Dense row-major matrix. Samples are rows throughout this codebase: a batch
// of m feature vectors of dimension d is an m x d matrix. The core computes
// in 64-bit floats; 32-bit floats appear only inside file formats.
// ---------------------------------------------------------------------------

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "resa/error.hpp"
#include "resa/rng.hpp"

namespace resa {

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;  // row-major, data.size() == rows * cols

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  double* row(std::size_t i) { return data.data() + i * cols; }
  const double* row(std::size_t i) const { return data.data() + i * cols; }

  bool same_shape(const Matrix& other) const {
    return rows == other.rows && cols == other.cols;
  }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static Matrix gaussian(std::size_t r, std::size_t c, Rng& rng, double stddev = 1.0) {
    Matrix m(r, c);
    for (double& v : m.data) v = stddev * rng.normal();
    return m;
  }
};

inline std::string shape_string(const Matrix& m) {
  return std::to_string(m.rows) + "x" + std::to_string(m.cols);
}

// c = a * b, a is m x k, b is k x n. i-k-j loop order keeps the inner loop
// contiguous in both b and c.
inline Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols == b.rows, "ShapeMismatch",
          "matmul " + shape_string(a) + " * " + shape_string(b));
  Matrix c(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* arow = a.row(i);
    double* crow = c.row(i);
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = arow[k];
      if (aik == 0.0) continue;
      const double* brow = b.row(k);
      for (std::size_t j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

// c = a * b^T, a is m x k, b is n x k. c_ij is a dot product of two rows.
inline Matrix matmul_bt(const Matrix& a, const Matrix& b) {
  require(a.cols == b.cols, "ShapeMismatch",
          "matmul_bt " + shape_string(a) + " * " + shape_string(b) + "^T");
  Matrix c(a.rows, b.rows);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* arow = a.row(i);
    for (std::size_t j = 0; j < b.rows; ++j) {
      const double* brow = b.row(j);
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k) acc += arow[k] * brow[k];
      c(i, j) = acc;
    }
  }
  return c;
}

// c = a^T * b, a is m x k, b is m x n, result k x n.
inline Matrix matmul_at(const Matrix& a, const Matrix& b) {
  require(a.rows == b.rows, "ShapeMismatch",
          "matmul_at " + shape_string(a) + "^T * " + shape_string(b));
  Matrix c(a.cols, b.cols);
  for (std::size_t r = 0; r < a.rows; ++r) {
    const double* arow = a.row(r);
    const double* brow = b.row(r);
    for (std::size_t i = 0; i < a.cols; ++i) {
      const double ari = arow[i];
      if (ari == 0.0) continue;
      double* crow = c.row(i);
      for (std::size_t j = 0; j < b.cols; ++j) crow[j] += ari * brow[j];
    }
  }
  return c;
}

inline Matrix transpose(const Matrix& a) {
  Matrix t(a.cols, a.rows);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
  return t;
}

inline Matrix operator+(const Matrix& a, const Matrix& b) {
  require(a.same_shape(b), "ShapeMismatch",
          "add " + shape_string(a) + " + " + shape_string(b));
  Matrix c = a;
  for (std::size_t i = 0; i < c.data.size(); ++i) c.data[i] += b.data[i];
  return c;
}

inline Matrix operator-(const Matrix& a, const Matrix& b) {
  require(a.same_shape(b), "ShapeMismatch",
          "sub " + shape_string(a) + " - " + shape_string(b));
  Matrix c = a;
  for (std::size_t i = 0; i < c.data.size(); ++i) c.data[i] -= b.data[i];
  return c;
}

inline Matrix operator*(double s, const Matrix& a) {
  Matrix c = a;
  for (double& v : c.data) v *= s;
  return c;
}

inline void add_in_place(Matrix& a, const Matrix& b) {
  require(a.same_shape(b), "ShapeMismatch",
          "add_in_place " + shape_string(a) + " += " + shape_string(b));
  for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  require(a.same_shape(b), "ShapeMismatch",
          "max_abs_diff " + shape_string(a) + " vs " + shape_string(b));
  double worst = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    worst = std::max(worst, std::fabs(a.data[i] - b.data[i]));
  return worst;
}

inline double frobenius_norm(const Matrix& a) {
  double acc = 0.0;
  for (double v : a.data) acc += v * v;
  return std::sqrt(acc);
}

}  // namespace resa
