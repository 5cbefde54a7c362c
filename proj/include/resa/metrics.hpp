#pragma once

// ---------------------------------------------------------------------------
// Clustering diagnostics.
//
//   silhouette   sc(x) = (b - a) / max(a, b) with a = mean distance to own
//                cluster (excluding self), b = smallest mean distance to any
//                other cluster. Singleton clusters score 0 (the ratio is
//                undefined there). Euclidean by default, 1 - cosine optional.
//   ARI          chance-corrected partition agreement via the contingency
//                table; all binomial sums in 128-bit integers so the
//                near-cancelling numerator stays exact up to n ~ 1e6.
//   kmeans       Lloyd with kmeans++ seeding, best of 10 restarts.
//   knn          weighted k-nearest-neighbor vote on cosine similarity,
//                weight exp(sim / 0.07).
//   linear probe multinomial logistic regression on frozen features,
//                full-batch gradient descent.
//
// The RESA_THREADS environment variable caps the silhouette distance loops;
// per-point results are independent, so any thread count gives bit-identical
// output. Default is 1.
// ---------------------------------------------------------------------------

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "resa/error.hpp"
#include "resa/matrix.hpp"
#include "resa/numerics.hpp"
#include "resa/rng.hpp"

namespace resa {

inline unsigned thread_cap() {
  const char* env = std::getenv("RESA_THREADS");
  if (!env) return 1;
  const long v = std::strtol(env, nullptr, 10);
  return v >= 1 ? static_cast<unsigned>(v) : 1;
}

enum class DistanceMetric { Euclidean, CosineDistance };

struct SilhouetteResult {
  std::vector<double> per_point;
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation
};

namespace detail {

// Maps arbitrary label values onto 0..k-1 (ordered by value) and returns the
// compact labels; cluster count goes to *k_out.
inline std::vector<int> compact_labels(const std::vector<int>& labels,
                                       std::size_t* k_out) {
  std::map<int, int> remap;
  for (int v : labels) remap.emplace(v, 0);
  int next = 0;
  for (auto& kv : remap) kv.second = next++;
  std::vector<int> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) out[i] = remap.at(labels[i]);
  *k_out = static_cast<std::size_t>(next);
  return out;
}

inline double point_distance(const Matrix& x, std::size_t i, std::size_t j,
                             DistanceMetric metric) {
  const double* a = x.row(i);
  const double* b = x.row(j);
  if (metric == DistanceMetric::Euclidean) {
    double acc = 0.0;
    for (std::size_t d = 0; d < x.cols; ++d) {
      const double diff = a[d] - b[d];
      acc += diff * diff;
    }
    return std::sqrt(acc);
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t d = 0; d < x.cols; ++d) {
    dot += a[d] * b[d];
    na += a[d] * a[d];
    nb += b[d] * b[d];
  }
  const double denom = std::sqrt(na) * std::sqrt(nb);
  return denom > 0.0 ? 1.0 - dot / denom : 1.0;
}

inline void run_blocks(std::size_t n, unsigned threads,
                       const std::function<void(std::size_t, std::size_t)>& body) {
  if (threads <= 1 || n < 2 * threads) {
    body(0, n);
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t chunk = (n + threads - 1) / threads;
  for (unsigned t = 0; t < threads; ++t) {
    const std::size_t lo = std::min(n, static_cast<std::size_t>(t) * chunk);
    const std::size_t hi = std::min(n, lo + chunk);
    if (lo < hi) pool.emplace_back([&body, lo, hi] { body(lo, hi); });
  }
  for (auto& th : pool) th.join();
}

}  // namespace detail

inline SilhouetteResult silhouette(const Matrix& x, const std::vector<int>& labels,
                                   DistanceMetric metric = DistanceMetric::Euclidean) {
  require(x.rows > 0, "EmptyInput", "no points");
  require(labels.size() == x.rows, "LengthMismatch",
          "labels size " + std::to_string(labels.size()) + " vs rows " +
              std::to_string(x.rows));
  std::size_t k = 0;
  const std::vector<int> y = detail::compact_labels(labels, &k);
  require(k >= 2, "SingleCluster", "silhouette needs at least 2 distinct labels");

  std::vector<std::size_t> cluster_size(k, 0);
  for (int v : y) ++cluster_size[static_cast<std::size_t>(v)];

  SilhouetteResult res;
  res.per_point.assign(x.rows, 0.0);

  detail::run_blocks(x.rows, thread_cap(), [&](std::size_t lo, std::size_t hi) {
    std::vector<double> sum(k);
    for (std::size_t i = lo; i < hi; ++i) {
      std::fill(sum.begin(), sum.end(), 0.0);
      for (std::size_t j = 0; j < x.rows; ++j) {
        if (j == i) continue;
        sum[static_cast<std::size_t>(y[j])] += detail::point_distance(x, i, j, metric);
      }
      const std::size_t own = static_cast<std::size_t>(y[i]);
      if (cluster_size[own] <= 1) {
        res.per_point[i] = 0.0;  // singleton: a(x) undefined
        continue;
      }
      const double a = sum[own] / static_cast<double>(cluster_size[own] - 1);
      double b = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        if (c == own || cluster_size[c] == 0) continue;
        b = std::min(b, sum[c] / static_cast<double>(cluster_size[c]));
      }
      const double denom = std::max(a, b);
      res.per_point[i] = denom > 0.0 ? (b - a) / denom : 0.0;
    }
  });

  double mean = 0.0;
  for (double v : res.per_point) mean += v;
  mean /= static_cast<double>(x.rows);
  double var = 0.0;
  for (double v : res.per_point) var += (v - mean) * (v - mean);
  res.mean = mean;
  res.stddev = std::sqrt(var / static_cast<double>(x.rows));
  return res;
}

// Adjusted Rand index through the contingency-table closed form. With
// M = C(N,2), sum_ij = sum C(n_ij,2), sa = sum_i C(a_i,2), sb = sum_j C(b_j,2):
//
//   ARI = (M * sum_ij - sa * sb) / (M * (sa + sb) / 2 - sa * sb)
//
// evaluated entirely in 128-bit integers (doubled to clear the /2). A zero
// denominator only happens when both partitions are trivial and identical in
// structure (all singletons or one cluster), which scores 1.
inline double adjusted_rand_index(const std::vector<int>& y_true,
                                  const std::vector<int>& y_pred) {
  require(y_true.size() == y_pred.size(), "LengthMismatch",
          "partitions differ in length: " + std::to_string(y_true.size()) + " vs " +
              std::to_string(y_pred.size()));
  require(y_true.size() >= 2, "LengthMismatch", "need at least 2 points");

  std::size_t ka = 0, kb = 0;
  const std::vector<int> a = detail::compact_labels(y_true, &ka);
  const std::vector<int> b = detail::compact_labels(y_pred, &kb);
  const std::size_t n = a.size();

  std::vector<std::int64_t> table(ka * kb, 0);
  std::vector<std::int64_t> row(ka, 0), col(kb, 0);
  for (std::size_t i = 0; i < n; ++i) {
    ++table[static_cast<std::size_t>(a[i]) * kb + static_cast<std::size_t>(b[i])];
    ++row[static_cast<std::size_t>(a[i])];
    ++col[static_cast<std::size_t>(b[i])];
  }

  using int128 = __int128;
  auto choose2 = [](std::int64_t v) -> int128 {
    return static_cast<int128>(v) * (v - 1) / 2;
  };
  int128 sum_ij = 0, sa = 0, sb = 0;
  for (std::int64_t v : table) sum_ij += choose2(v);
  for (std::int64_t v : row) sa += choose2(v);
  for (std::int64_t v : col) sb += choose2(v);
  const int128 total = choose2(static_cast<std::int64_t>(n));

  const int128 numerator = 2 * (total * sum_ij - sa * sb);
  const int128 denominator = total * (sa + sb) - 2 * sa * sb;
  if (denominator == 0) return 1.0;
  return static_cast<double>(numerator) / static_cast<double>(denominator);
}

struct KmeansResult {
  std::vector<int> labels;
  Matrix centroids;
  double inertia = 0.0;
};

namespace detail {

inline double sq_distance(const double* a, const double* b, std::size_t d) {
  double acc = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double diff = a[i] - b[i];
    acc += diff * diff;
  }
  return acc;
}

inline KmeansResult lloyd_once(const Matrix& x, std::size_t k, Rng& rng) {
  const std::size_t n = x.rows, d = x.cols;
  Matrix centroids(k, d);

  // kmeans++ seeding: first centroid uniform, then D^2 sampling.
  std::vector<double> best_sq(n, std::numeric_limits<double>::infinity());
  std::size_t first = static_cast<std::size_t>(rng.below(n));
  std::copy(x.row(first), x.row(first) + d, centroids.row(0));
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      best_sq[i] = std::min(best_sq[i], sq_distance(x.row(i), centroids.row(c - 1), d));
      total += best_sq[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += best_sq[i];
        if (acc >= target) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<std::size_t>(rng.below(n));  // all points identical
    }
    std::copy(x.row(pick), x.row(pick) + d, centroids.row(c));
  }

  KmeansResult res;
  res.labels.assign(n, 0);
  std::vector<double> dist_to_own(n, 0.0);
  const std::size_t max_iterations = 300;
  for (std::size_t iter = 0; iter < max_iterations; ++iter) {
    // Assign: nearest centroid, lowest index on ties.
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      int arg = 0;
      for (std::size_t c = 0; c < k; ++c) {
        const double dd = sq_distance(x.row(i), centroids.row(c), d);
        if (dd < best) {
          best = dd;
          arg = static_cast<int>(c);
        }
      }
      res.labels[i] = arg;
      dist_to_own[i] = best;
    }

    // Re-seed any emptied cluster with the point farthest from its centroid.
    std::vector<std::size_t> count(k, 0);
    for (int c : res.labels) ++count[static_cast<std::size_t>(c)];
    for (std::size_t c = 0; c < k; ++c) {
      if (count[c] > 0) continue;
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (count[static_cast<std::size_t>(res.labels[i])] > 1 && dist_to_own[i] > far_d) {
          far_d = dist_to_own[i];
          far = i;
        }
      }
      --count[static_cast<std::size_t>(res.labels[far])];
      res.labels[far] = static_cast<int>(c);
      count[c] = 1;
      dist_to_own[far] = 0.0;
    }

    // Update.
    Matrix next(k, d);
    std::fill(count.begin(), count.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = static_cast<std::size_t>(res.labels[i]);
      ++count[c];
      const double* xi = x.row(i);
      double* cr = next.row(c);
      for (std::size_t j = 0; j < d; ++j) cr[j] += xi[j];
    }
    double shift = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      double* cr = next.row(c);
      if (count[c] > 0)
        for (std::size_t j = 0; j < d; ++j) cr[j] /= static_cast<double>(count[c]);
      else
        std::copy(centroids.row(c), centroids.row(c) + d, cr);
      shift = std::max(shift, std::sqrt(sq_distance(cr, centroids.row(c), d)));
    }
    centroids = std::move(next);
    if (shift < 1e-8) break;
  }

  res.centroids = std::move(centroids);
  res.inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    int arg = 0;
    for (std::size_t c = 0; c < k; ++c) {
      const double dd = sq_distance(x.row(i), res.centroids.row(c), d);
      if (dd < best) {
        best = dd;
        arg = static_cast<int>(c);
      }
    }
    res.labels[i] = arg;
    res.inertia += best;
  }
  return res;
}

}  // namespace detail

inline KmeansResult kmeans(const Matrix& x, std::size_t k, Rng& rng,
                           std::size_t restarts = 10) {
  require(x.rows > 0, "EmptyInput", "no points to cluster");
  require(k >= 1 && k <= x.rows, "KTooLarge",
          "k = " + std::to_string(k) + " with n = " + std::to_string(x.rows));
  KmeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < restarts; ++r) {
    KmeansResult candidate = detail::lloyd_once(x, k, rng);
    if (candidate.inertia < best.inertia) best = std::move(candidate);
  }
  return best;
}

struct KnnConfig {
  std::size_t k = 5;
  double tau = 0.07;
};

// Weighted k-NN vote on cosine similarity. Rows of both matrices must be
// L2-normalized; neighbor order is (similarity desc, index asc) and class
// ties resolve to the smallest class index.
inline std::vector<int> knn_classify(const Matrix& train_x,
                                     const std::vector<int>& train_y,
                                     const Matrix& test_x, const KnnConfig& cfg = {}) {
  require(train_x.rows > 0, "EmptyInput", "empty training set");
  require(train_y.size() == train_x.rows, "LengthMismatch",
          "training labels do not match rows");
  require(cfg.k >= 1 && cfg.k <= train_x.rows, "KTooLarge",
          "k = " + std::to_string(cfg.k) + " with " + std::to_string(train_x.rows) +
              " training rows");
  require(test_x.cols == train_x.cols, "ShapeMismatch", "feature dims differ");
  for (std::size_t i = 0; i < train_x.rows; ++i)
    if (std::fabs(row_norm(train_x, i) - 1.0) > 1e-9)
      fail("NotNormalized", "training row " + std::to_string(i));
  for (std::size_t i = 0; i < test_x.rows; ++i)
    if (std::fabs(row_norm(test_x, i) - 1.0) > 1e-9)
      fail("NotNormalized", "test row " + std::to_string(i));

  int max_label = 0;
  for (int v : train_y) max_label = std::max(max_label, v);
  const std::size_t n_classes = static_cast<std::size_t>(max_label) + 1;

  std::vector<int> predictions(test_x.rows, 0);
  std::vector<std::pair<double, std::size_t>> order(train_x.rows);
  std::vector<double> weight(n_classes);
  for (std::size_t t = 0; t < test_x.rows; ++t) {
    const double* q = test_x.row(t);
    for (std::size_t i = 0; i < train_x.rows; ++i) {
      const double* r = train_x.row(i);
      double sim = 0.0;
      for (std::size_t d = 0; d < train_x.cols; ++d) sim += q[d] * r[d];
      order[i] = {-sim, i};
    }
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(cfg.k),
                      order.end());
    std::fill(weight.begin(), weight.end(), 0.0);
    for (std::size_t j = 0; j < cfg.k; ++j) {
      const double sim = -order[j].first;
      const int cls = train_y[order[j].second];
      weight[static_cast<std::size_t>(cls)] += std::exp(sim / cfg.tau);
    }
    int arg = 0;
    for (std::size_t c = 1; c < n_classes; ++c)
      if (weight[c] > weight[static_cast<std::size_t>(arg)]) arg = static_cast<int>(c);
    predictions[t] = arg;
  }
  return predictions;
}

inline double accuracy(const std::vector<int>& predicted,
                       const std::vector<int>& truth) {
  require(predicted.size() == truth.size(), "LengthMismatch",
          "prediction / truth size mismatch");
  require(!predicted.empty(), "EmptyInput", "no predictions");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i)
    if (predicted[i] == truth[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

// Multinomial logistic regression on frozen features: full-batch gradient
// descent, 500 epochs, lr 0.1 with cosine decay, zero init (the objective is
// convex, so the rng parameter is accepted for interface uniformity only).
inline double linear_probe(const Matrix& train_x, const std::vector<int>& train_y,
                           const Matrix& test_x, const std::vector<int>& test_y,
                           Rng& rng) {
  (void)rng;
  require(train_y.size() == train_x.rows, "LengthMismatch", "train labels vs rows");
  require(test_y.size() == test_x.rows, "LengthMismatch", "test labels vs rows");
  require(train_x.cols == test_x.cols, "ShapeMismatch", "feature dims differ");
  require(train_x.rows > 0 && test_x.rows > 0, "EmptyInput", "empty split");

  int max_label = 0;
  for (int v : train_y) max_label = std::max(max_label, v);
  for (int v : test_y) max_label = std::max(max_label, v);
  const std::size_t n_classes = static_cast<std::size_t>(max_label) + 1;
  const std::size_t n = train_x.rows, d = train_x.cols;

  Matrix w(d, n_classes);
  std::vector<double> bias(n_classes, 0.0);
  const std::size_t epochs = 500;
  const double lr_peak = 0.1;
  const double pi = 3.14159265358979323846;

  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    Matrix logits = matmul(train_x, w);
    for (std::size_t i = 0; i < n; ++i) {
      double* r = logits.row(i);
      for (std::size_t c = 0; c < n_classes; ++c) r[c] += bias[c];
    }
    Matrix p = softmax_rows(logits, 1.0);
    for (std::size_t i = 0; i < n; ++i)
      p(i, static_cast<std::size_t>(train_y[i])) -= 1.0;  // P - Y
    const double scale = 1.0 / static_cast<double>(n);
    Matrix grad_w = matmul_at(train_x, p);
    const double lr =
        0.5 * lr_peak *
        (1.0 + std::cos(pi * static_cast<double>(epoch) / static_cast<double>(epochs)));
    for (std::size_t i = 0; i < w.data.size(); ++i)
      w.data[i] -= lr * scale * grad_w.data[i];
    for (std::size_t c = 0; c < n_classes; ++c) {
      double g = 0.0;
      for (std::size_t i = 0; i < n; ++i) g += p(i, c);
      bias[c] -= lr * scale * g;
    }
  }

  Matrix logits = matmul(test_x, w);
  std::vector<int> predicted(test_x.rows, 0);
  for (std::size_t i = 0; i < test_x.rows; ++i) {
    double* r = logits.row(i);
    for (std::size_t c = 0; c < n_classes; ++c) r[c] += bias[c];
    std::size_t arg = 0;
    for (std::size_t c = 1; c < n_classes; ++c)
      if (r[c] > r[arg]) arg = c;
    predicted[i] = static_cast<int>(arg);
  }
  return accuracy(predicted, test_y);
}

// One evaluation snapshot. Fields that a given producer cannot compute stay
// NaN (cmd_metrics has no loss; the probe is optional everywhere).
struct MetricsRecord {
  std::size_t epoch = 0;
  double loss = std::numeric_limits<double>::quiet_NaN();
  double sc_mean = 0.0;
  double sc_std = 0.0;
  double ari = 0.0;
  double knn_accuracy = 0.0;
  std::optional<double> linear_accuracy;
  double collapse_min_std = std::numeric_limits<double>::quiet_NaN();
  double assignment_diag_mass = std::numeric_limits<double>::quiet_NaN();
  double lr = std::numeric_limits<double>::quiet_NaN();
};

// Smallest per-dimension standard deviation across the batch; near zero in
// every dimension means the representation has collapsed.
inline double min_dimension_std(const Matrix& z) {
  require(z.rows > 0, "EmptyInput", "empty batch");
  double worst = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < z.cols; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < z.rows; ++i) mean += z(i, j);
    mean /= static_cast<double>(z.rows);
    double var = 0.0;
    for (std::size_t i = 0; i < z.rows; ++i) {
      const double diff = z(i, j) - mean;
      var += diff * diff;
    }
    worst = std::min(worst, std::sqrt(var / static_cast<double>(z.rows)));
  }
  return worst;
}

}  // namespace resa
