#pragma once

// Test-side reference implementations. Each one recomputes a quantity through
// a different route than the library (explicit distance matrices, pair
// counting, extended precision) so the two can be checked against each other.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <vector>

#include "resa/matrix.hpp"

namespace oracle {

// Silhouette from an explicit distance matrix with per-cluster bookkeeping.
inline std::vector<double> silhouette(const resa::Matrix& x,
                                      const std::vector<int>& y) {
  const std::size_t n = x.rows;
  resa::Matrix dist(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t d = 0; d < x.cols; ++d) {
        const double diff = x(i, d) - x(j, d);
        acc += diff * diff;
      }
      dist(i, j) = std::sqrt(acc);
    }

  std::map<int, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < n; ++i) members[y[i]].push_back(i);

  std::vector<double> sc(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& own = members.at(y[i]);
    if (own.size() <= 1) continue;
    double a = 0.0;
    for (std::size_t j : own)
      if (j != i) a += dist(i, j);
    a /= static_cast<double>(own.size() - 1);
    double b = std::numeric_limits<double>::infinity();
    for (const auto& [label, idx] : members) {
      if (label == y[i]) continue;
      double mean = 0.0;
      for (std::size_t j : idx) mean += dist(i, j);
      b = std::min(b, mean / static_cast<double>(idx.size()));
    }
    sc[i] = (b - a) / std::max(a, b);
  }
  return sc;
}

// Pair-counting adjusted Rand index: buckets every pair into the four
// agreement cells and evaluates the adjusted form from those counts.
inline double adjusted_rand_index(const std::vector<int>& u,
                                  const std::vector<int>& v) {
  const std::size_t n = u.size();
  double n11 = 0, n10 = 0, n01 = 0, n00 = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool same_u = u[i] == u[j];
      const bool same_v = v[i] == v[j];
      if (same_u && same_v) ++n11;
      else if (same_u) ++n10;
      else if (same_v) ++n01;
      else ++n00;
    }
  const double numerator = 2.0 * (n11 * n00 - n10 * n01);
  const double denominator = (n11 + n10) * (n10 + n00) + (n11 + n01) * (n01 + n00);
  if (denominator == 0.0) return 1.0;
  return numerator / denominator;
}

// Literal re-execution of the balancing loop in long double: transposed
// kernel, T rounds of (rows -> 1/m, cols -> 1/m), final column normalization
// to 1, transpose back. No stabilization; relies on extended range.
inline resa::Matrix sinkhorn(const resa::Matrix& s, double eps, std::size_t iters) {
  const std::size_t m = s.rows;
  std::vector<long double> q(m * m);
  long double total = 0.0L;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      q[i * m + j] = expl(static_cast<long double>(s(j, i)) / eps);
      total += q[i * m + j];
    }
  for (auto& v : q) v /= total;

  const long double c = 1.0L / static_cast<long double>(m);
  for (std::size_t t = 0; t < iters; ++t) {
    for (std::size_t i = 0; i < m; ++i) {
      long double sum = 0.0L;
      for (std::size_t j = 0; j < m; ++j) sum += q[i * m + j];
      for (std::size_t j = 0; j < m; ++j) q[i * m + j] *= c / sum;
    }
    for (std::size_t j = 0; j < m; ++j) {
      long double sum = 0.0L;
      for (std::size_t i = 0; i < m; ++i) sum += q[i * m + j];
      for (std::size_t i = 0; i < m; ++i) q[i * m + j] *= c / sum;
    }
  }
  for (std::size_t j = 0; j < m; ++j) {
    long double sum = 0.0L;
    for (std::size_t i = 0; i < m; ++i) sum += q[i * m + j];
    for (std::size_t i = 0; i < m; ++i) q[i * m + j] /= sum;
  }

  resa::Matrix a(m, m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) a(i, j) = static_cast<double>(q[j * m + i]);
  return a;
}

}  // namespace oracle
