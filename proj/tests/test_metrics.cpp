#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "oracles.hpp"
#include "resa/error.hpp"
#include "resa/matrix.hpp"
#include "resa/metrics.hpp"
#include "resa/numerics.hpp"
#include "resa/rng.hpp"

using resa::Matrix;
using resa::Rng;

namespace {

// Exhaustive k-NN oracle with a full stable sort.
std::vector<int> knn_oracle(const Matrix& train_x, const std::vector<int>& train_y,
                            const Matrix& test_x, std::size_t k, double tau) {
  std::vector<int> out(test_x.rows);
  for (std::size_t t = 0; t < test_x.rows; ++t) {
    std::vector<std::pair<double, std::size_t>> sims;
    for (std::size_t i = 0; i < train_x.rows; ++i) {
      double s = 0.0;
      for (std::size_t d = 0; d < train_x.cols; ++d) s += test_x(t, d) * train_x(i, d);
      sims.push_back({s, i});
    }
    std::stable_sort(sims.begin(), sims.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    std::map<int, double> weights;
    for (std::size_t j = 0; j < k; ++j)
      weights[train_y[sims[j].second]] += std::exp(sims[j].first / tau);
    int best = weights.begin()->first;
    for (const auto& [cls, w] : weights)
      if (w > weights.at(best)) best = cls;
    out[t] = best;
  }
  return out;
}

Matrix blobs(const std::vector<std::vector<double>>& centers, std::size_t per,
             double spread, Rng& rng, std::vector<int>* labels) {
  const std::size_t d = centers[0].size();
  Matrix x(centers.size() * per, d);
  labels->clear();
  std::size_t row = 0;
  for (std::size_t c = 0; c < centers.size(); ++c)
    for (std::size_t s = 0; s < per; ++s, ++row) {
      for (std::size_t j = 0; j < d; ++j)
        x(row, j) = centers[c][j] + spread * rng.normal();
      labels->push_back(static_cast<int>(c));
    }
  return x;
}

}  // namespace

TEST(Silhouette, DuplicatedFarClustersScoreOne) {
  Matrix x(4, 2);
  x(0, 0) = x(1, 0) = 0.0;
  x(2, 0) = x(3, 0) = 100.0;
  const std::vector<int> y = {0, 0, 1, 1};
  const resa::SilhouetteResult res = resa::silhouette(x, y);
  for (double v : res.per_point) EXPECT_DOUBLE_EQ(v, 1.0);
  EXPECT_DOUBLE_EQ(res.mean, 1.0);
  EXPECT_DOUBLE_EQ(res.stddev, 0.0);
}

TEST(Silhouette, EquidistantPointScoresZero) {
  // Point 0 sits exactly between its cluster mate at distance 2 and the
  // other cluster at mean distance 2.
  Matrix x(3, 1);
  x(0, 0) = 0.0;
  x(1, 0) = 2.0;
  x(2, 0) = -2.0;
  const std::vector<int> y = {0, 0, 1};
  const resa::SilhouetteResult res = resa::silhouette(x, y);
  EXPECT_DOUBLE_EQ(res.per_point[0], 0.0);
}

TEST(Silhouette, SingletonClusterConvention) {
  Matrix x(3, 1);
  x(0, 0) = 0.0;
  x(1, 0) = 1.0;
  x(2, 0) = 10.0;
  const std::vector<int> y = {0, 0, 1};
  const resa::SilhouetteResult res = resa::silhouette(x, y);
  EXPECT_DOUBLE_EQ(res.per_point[2], 0.0);
}

TEST(Silhouette, MatchesBruteForceOracle) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(100 + seed);
    std::vector<int> y;
    const std::size_t per = 5 + seed % 12;
    const Matrix x = blobs({{0.0, 0.0}, {3.0, 1.0}, {-2.0, 4.0}}, per, 1.5, rng, &y);
    // Scatter some label noise so cluster geometry is not trivial.
    for (std::size_t i = 0; i < y.size(); i += 7) y[i] = static_cast<int>(rng.below(3));
    const resa::SilhouetteResult res = resa::silhouette(x, y);
    const std::vector<double> expected = oracle::silhouette(x, y);
    for (std::size_t i = 0; i < y.size(); ++i)
      ASSERT_NEAR(res.per_point[i], expected[i], 1e-12) << "seed " << seed;
  }
}

TEST(Silhouette, ErrorKinds) {
  Matrix x(3, 1);
  EXPECT_THROW(resa::silhouette(Matrix(0, 1), {}), resa::Error);
  try {
    resa::silhouette(x, {1, 1, 1});
    FAIL() << "expected SingleCluster";
  } catch (const resa::Error& e) {
    EXPECT_EQ(e.kind(), "SingleCluster");
  }
}

TEST(Silhouette, CosineAndEuclideanAgreeInSignOnUnitRows) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(500 + seed);
    std::vector<int> y;
    Matrix x = blobs({{5.0, 0.0, 0.0}, {0.0, 5.0, 0.0}}, 12, 0.8, rng, &y);
    x = resa::l2_normalize_rows(x);
    const resa::SilhouetteResult euclid =
        resa::silhouette(x, y, resa::DistanceMetric::Euclidean);
    const resa::SilhouetteResult cosine =
        resa::silhouette(x, y, resa::DistanceMetric::CosineDistance);
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (std::fabs(euclid.per_point[i]) < 1e-9) continue;
      ASSERT_GT(euclid.per_point[i] * cosine.per_point[i], 0.0)
          << "seed " << seed << " point " << i;
    }
  }
}

TEST(Silhouette, ThreadCountDoesNotChangeBits) {
  Rng rng(77);
  std::vector<int> y;
  const Matrix x = blobs({{0.0, 0.0}, {2.0, 2.0}}, 40, 1.0, rng, &y);
  const resa::SilhouetteResult single = resa::silhouette(x, y);
  setenv("RESA_THREADS", "4", 1);
  const resa::SilhouetteResult threaded = resa::silhouette(x, y);
  unsetenv("RESA_THREADS");
  ASSERT_EQ(single.per_point, threaded.per_point);
}

TEST(Ari, IdenticalPartitions) {
  EXPECT_DOUBLE_EQ(resa::adjusted_rand_index({0, 0, 1, 1, 2}, {0, 0, 1, 1, 2}), 1.0);
  EXPECT_DOUBLE_EQ(resa::adjusted_rand_index({3, 3, 9, 9}, {1, 1, 0, 0}), 1.0);
}

TEST(Ari, HandComputedCrossCase) {
  EXPECT_DOUBLE_EQ(resa::adjusted_rand_index({0, 0, 1, 1}, {0, 1, 0, 1}), -0.5);
}

TEST(Ari, MatchesPairCountingOracle) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(1000 + seed);
    const std::size_t n = 20 + rng.below(180);
    const std::size_t ka = 2 + rng.below(6);
    const std::size_t kb = 2 + rng.below(6);
    std::vector<int> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = static_cast<int>(rng.below(ka));
      b[i] = static_cast<int>(rng.below(kb));
    }
    ASSERT_NEAR(resa::adjusted_rand_index(a, b), oracle::adjusted_rand_index(a, b), 1e-12)
        << "seed " << seed;
  }
}

TEST(Ari, ChanceLevelNearZero) {
  Rng rng(31337);
  double total = 0.0;
  const int trials = 100;
  for (int t = 0; t < trials; ++t) {
    std::vector<int> a(100), b(100);
    for (std::size_t i = 0; i < 100; ++i) {
      a[i] = static_cast<int>(rng.below(5));
      b[i] = static_cast<int>(rng.below(5));
    }
    total += resa::adjusted_rand_index(a, b);
  }
  EXPECT_NEAR(total / trials, 0.0, 0.05);
}

TEST(Ari, SymmetricAndPermutationInvariant) {
  Rng rng(99);
  std::vector<int> a(60), b(60);
  for (std::size_t i = 0; i < 60; ++i) {
    a[i] = static_cast<int>(rng.below(4));
    b[i] = static_cast<int>(rng.below(3));
  }
  EXPECT_NEAR(resa::adjusted_rand_index(a, b), resa::adjusted_rand_index(b, a), 1e-12);

  std::vector<int> relabeled = a;
  for (int& v : relabeled) v = (v + 2) % 4 + 10;  // bijective relabeling
  EXPECT_DOUBLE_EQ(resa::adjusted_rand_index(a, b),
                   resa::adjusted_rand_index(relabeled, b));
}

TEST(Ari, LengthMismatchRejected) {
  EXPECT_THROW(resa::adjusted_rand_index({0, 1}, {0, 1, 2}), resa::Error);
  EXPECT_THROW(resa::adjusted_rand_index({0}, {0}), resa::Error);
}

TEST(Kmeans, EachPointItsOwnCluster) {
  Rng rng(7);
  const Matrix x = Matrix::gaussian(6, 3, rng);
  const resa::KmeansResult res = resa::kmeans(x, 6, rng);
  EXPECT_NEAR(res.inertia, 0.0, 1e-18);
  std::vector<int> sorted = res.labels;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(sorted[i], static_cast<int>(i));
}

TEST(Kmeans, SeparatedPairsRecovered) {
  Matrix x(4, 2);
  x(0, 0) = 0.0; x(1, 0) = 0.1;
  x(2, 0) = 50.0; x(3, 0) = 50.1;
  Rng rng(8);
  const resa::KmeansResult res = resa::kmeans(x, 2, rng);
  EXPECT_DOUBLE_EQ(resa::adjusted_rand_index({0, 0, 1, 1}, res.labels), 1.0);
}

TEST(Kmeans, BeatsRandomAssignmentBaseline) {
  Rng rng(9);
  std::vector<int> y;
  const Matrix x = blobs({{0.0, 0.0}, {4.0, 0.0}, {0.0, 4.0}}, 30, 1.0, rng, &y);
  const resa::KmeansResult res = resa::kmeans(x, 3, rng);

  // Baseline: random labels, centroids as their means.
  Rng base_rng(10);
  std::vector<int> random_labels(x.rows);
  for (int& v : random_labels) v = static_cast<int>(base_rng.below(3));
  Matrix centroids(3, 2);
  std::vector<std::size_t> counts(3, 0);
  for (std::size_t i = 0; i < x.rows; ++i) {
    const auto c = static_cast<std::size_t>(random_labels[i]);
    ++counts[c];
    for (std::size_t d = 0; d < 2; ++d) centroids(c, d) += x(i, d);
  }
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t d = 0; d < 2; ++d)
      if (counts[c] > 0) centroids(c, d) /= static_cast<double>(counts[c]);
  double baseline = 0.0;
  for (std::size_t i = 0; i < x.rows; ++i) {
    const auto c = static_cast<std::size_t>(random_labels[i]);
    for (std::size_t d = 0; d < 2; ++d) {
      const double diff = x(i, d) - centroids(c, d);
      baseline += diff * diff;
    }
  }
  EXPECT_LT(res.inertia, baseline);
}

TEST(Kmeans, DeterministicGivenRng) {
  Rng rng_data(11);
  const Matrix x = Matrix::gaussian(40, 5, rng_data);
  Rng a(12), b(12);
  const resa::KmeansResult ra = resa::kmeans(x, 4, a);
  const resa::KmeansResult rb = resa::kmeans(x, 4, b);
  EXPECT_EQ(ra.labels, rb.labels);
  EXPECT_EQ(ra.inertia, rb.inertia);
}

TEST(Kmeans, KTooLargeRejected) {
  Rng rng(13);
  const Matrix x = Matrix::gaussian(5, 2, rng);
  EXPECT_THROW(resa::kmeans(x, 6, rng), resa::Error);
}

TEST(Knn, NearestNeighborAtKOne) {
  Matrix train(2, 2);
  train(0, 0) = 1.0; train(1, 1) = 1.0;
  Matrix test(1, 2);
  test(0, 0) = 0.9; test(0, 1) = std::sqrt(1.0 - 0.81);
  const std::vector<int> pred =
      resa::knn_classify(train, {5, 9}, test, {1, 0.07});
  EXPECT_EQ(pred[0], 5);
}

TEST(Knn, DuplicatedTrainingPointDominates) {
  Rng rng(14);
  Matrix train = resa::l2_normalize_rows(Matrix::gaussian(20, 6, rng));
  std::vector<int> y(20);
  for (std::size_t i = 0; i < 20; ++i) y[i] = static_cast<int>(i % 3);
  Matrix test(1, 6);
  std::copy(train.row(4), train.row(4) + 6, test.row(0));
  for (std::size_t k : {1u, 3u, 5u, 9u}) {
    const std::vector<int> pred = resa::knn_classify(train, y, test, {k, 0.07});
    EXPECT_EQ(pred[0], y[4]) << "k " << k;
  }
}

TEST(Knn, MatchesExhaustiveOracle) {
  Rng rng(15);
  const Matrix train = resa::l2_normalize_rows(Matrix::gaussian(100, 8, rng));
  const Matrix test = resa::l2_normalize_rows(Matrix::gaussian(20, 8, rng));
  std::vector<int> y(100);
  for (std::size_t i = 0; i < 100; ++i) y[i] = static_cast<int>(rng.below(4));
  const std::vector<int> pred = resa::knn_classify(train, y, test, {5, 0.07});
  EXPECT_EQ(pred, knn_oracle(train, y, test, 5, 0.07));
}

TEST(Knn, AllEqualLabelsAlwaysPredicted) {
  Rng rng(16);
  const Matrix train = resa::l2_normalize_rows(Matrix::gaussian(12, 4, rng));
  const Matrix test = resa::l2_normalize_rows(Matrix::gaussian(5, 4, rng));
  const std::vector<int> y(12, 3);
  for (int pred : resa::knn_classify(train, y, test, {4, 0.07}))
    EXPECT_EQ(pred, 3);
}

TEST(Knn, ErrorKinds) {
  Rng rng(17);
  const Matrix train = resa::l2_normalize_rows(Matrix::gaussian(4, 3, rng));
  const Matrix test = resa::l2_normalize_rows(Matrix::gaussian(2, 3, rng));
  EXPECT_THROW(resa::knn_classify(train, {0, 1, 0, 1}, test, {9, 0.07}), resa::Error);
  Matrix bad = train;
  bad(0, 0) *= 2.0;
  try {
    resa::knn_classify(bad, {0, 1, 0, 1}, test, {2, 0.07});
    FAIL() << "expected NotNormalized";
  } catch (const resa::Error& e) {
    EXPECT_EQ(e.kind(), "NotNormalized");
  }
}

TEST(LinearProbe, SeparableBlobsReachPerfectAccuracy) {
  Rng rng(18);
  std::vector<int> y;
  const Matrix x = blobs({{0.0, 0.0}, {10.0, 10.0}}, 40, 0.5, rng, &y);
  Matrix train(60, 2), test(20, 2);
  std::vector<int> train_y, test_y;
  for (std::size_t i = 0; i < x.rows; ++i) {
    if (i % 4 == 3) {
      std::copy(x.row(i), x.row(i) + 2, test.row(test_y.size()));
      test_y.push_back(y[i]);
    } else {
      std::copy(x.row(i), x.row(i) + 2, train.row(train_y.size()));
      train_y.push_back(y[i]);
    }
  }
  Rng probe_rng(19);
  EXPECT_DOUBLE_EQ(resa::linear_probe(train, train_y, test, test_y, probe_rng), 1.0);
}

TEST(LinearProbe, OneHotFeaturesArePerfect) {
  const std::size_t classes = 4, per = 10;
  Matrix x(classes * per, classes);
  std::vector<int> y;
  for (std::size_t c = 0; c < classes; ++c)
    for (std::size_t s = 0; s < per; ++s) {
      x(y.size(), c) = 1.0;
      y.push_back(static_cast<int>(c));
    }
  Rng probe_rng(20);
  EXPECT_DOUBLE_EQ(resa::linear_probe(x, y, x, y, probe_rng), 1.0);
}

TEST(LinearProbe, ShuffledLabelsAreChanceLevel) {
  Rng rng(21);
  const Matrix train = Matrix::gaussian(400, 16, rng);
  const Matrix test = Matrix::gaussian(200, 16, rng);
  std::vector<int> train_y(400), test_y(200);
  for (int& v : train_y) v = static_cast<int>(rng.below(10));
  for (int& v : test_y) v = static_cast<int>(rng.below(10));
  Rng probe_rng(22);
  const double acc = resa::linear_probe(train, train_y, test, test_y, probe_rng);
  EXPECT_NEAR(acc, 0.1, 0.05);
}

TEST(MinDimensionStd, DetectsCollapsedDimension) {
  Rng rng(23);
  Matrix z = Matrix::gaussian(50, 4, rng);
  EXPECT_GT(resa::min_dimension_std(z), 0.5);
  for (std::size_t i = 0; i < z.rows; ++i) z(i, 2) = 3.14;
  EXPECT_LT(resa::min_dimension_std(z), 1e-12);
}
