#include <gtest/gtest.h>

#include <cmath>

#include "resa/error.hpp"
#include "resa/gradcheck.hpp"
#include "resa/matrix.hpp"
#include "resa/network.hpp"
#include "resa/numerics.hpp"
#include "resa/optimizer.hpp"
#include "resa/rng.hpp"

using resa::Branch;
using resa::Matrix;
using resa::Mlp;
using resa::MlpSpec;
using resa::NetworkPair;
using resa::NetworkShape;
using resa::Rng;

namespace {

Mlp identity_mlp(std::size_t n) {
  Mlp mlp;
  mlp.spec = MlpSpec{{n, n}};
  resa::LinearLayer layer;
  layer.weight = Matrix::identity(n);
  layer.bias.assign(n, 0.0);
  mlp.layers.push_back(layer);
  return mlp;
}

Branch identity_branch(std::size_t n) {
  Branch b;
  b.encoder = identity_mlp(n);
  b.projector = identity_mlp(n);
  return b;
}

NetworkShape small_shape(bool predictor = false) {
  NetworkShape s;
  s.encoder_dims = {6, 12, 5};
  s.projector_dims = {5, 8, 4};
  s.predictor_dims = {4, 8, 4};
  s.use_predictor = predictor;
  return s;
}

}  // namespace

TEST(Forward, IdentityEncoderReproducesInput) {
  const std::size_t n = 4;
  const Branch b = identity_branch(n);
  const resa::ForwardResult res = resa::forward(b, Matrix::identity(n), false);
  EXPECT_LE(resa::max_abs_diff(res.encoding, Matrix::identity(n)), 0.0);
  // Identity rows are unit norm already, so the embedding matches too.
  EXPECT_LE(resa::max_abs_diff(res.embedding, Matrix::identity(n)), 1e-15);
}

TEST(Forward, ZeroHeadSurfacesZeroRow) {
  Branch b = identity_branch(3);
  for (double& v : b.projector.layers[0].weight.data) v = 0.0;
  try {
    resa::forward(b, Matrix::identity(3), false);
    FAIL() << "expected ZeroRow";
  } catch (const resa::Error& e) {
    EXPECT_EQ(e.kind(), "ZeroRow");
  }
}

TEST(Forward, EmbeddingRowsAreUnitNorm) {
  Rng rng(4);  // seed 3 draws a dead-ReLU sample at this tiny width
  const NetworkPair pair = resa::make_network_pair(small_shape(true), 0.99, rng);
  const Matrix x = Matrix::gaussian(10, 6, rng);
  const resa::ForwardResult res = resa::forward(pair.online, x, false);
  for (std::size_t i = 0; i < res.embedding.rows; ++i)
    EXPECT_NEAR(resa::row_norm(res.embedding, i), 1.0, 1e-9);
  EXPECT_EQ(res.encoding.cols, 5u);
  EXPECT_EQ(res.embedding.cols, 4u);
}

TEST(Forward, RejectsWrongInputDim) {
  Rng rng(4);
  const NetworkPair pair = resa::make_network_pair(small_shape(), 0.99, rng);
  EXPECT_THROW(resa::forward(pair.online, Matrix(3, 7, 1.0), false), resa::Error);
}

TEST(Backward, ZeroUpstreamGivesZeroGradients) {
  Rng rng(5);
  const NetworkPair pair = resa::make_network_pair(small_shape(), 0.99, rng);
  const Matrix x = Matrix::gaussian(7, 6, rng);
  const resa::ForwardResult res = resa::forward(pair.online, x, true);
  const resa::BranchGrads grads =
      resa::backward(pair.online, res.tape, Matrix(7, 4, 0.0));
  for (const Matrix& g : grads.weight)
    for (double v : g.data) ASSERT_EQ(v, 0.0);
  for (const auto& b : grads.bias)
    for (double v : b) ASSERT_EQ(v, 0.0);
}

TEST(Backward, LinearLayerGradientPattern) {
  // Identity net on unit-norm inputs: embedding equals input, and for an
  // upstream gradient orthogonal to each embedding row the normalization
  // projection is a no-op, so the first weight gradient is exactly X^T G.
  const std::size_t n = 3;
  const Branch b = identity_branch(n);
  const Matrix x = Matrix::identity(n);
  const resa::ForwardResult res = resa::forward(b, x, true);
  Matrix g(n, n, 1.0);
  for (std::size_t i = 0; i < n; ++i) g(i, i) = 0.0;  // orthogonal to e_i rows
  const resa::BranchGrads grads = resa::backward(b, res.tape, g);
  const Matrix expected = resa::matmul_at(x, g);
  EXPECT_LE(resa::max_abs_diff(grads.weight[0], expected), 1e-12);
  for (std::size_t j = 0; j < n; ++j) {
    double col = 0.0;
    for (std::size_t i = 0; i < n; ++i) col += g(i, j);
    EXPECT_NEAR(grads.bias[1][j], col, 1e-12);
  }
}

TEST(Backward, StaleTapeRejected) {
  Rng rng(6);
  const NetworkPair pair = resa::make_network_pair(small_shape(), 0.99, rng);
  const Matrix x = Matrix::gaussian(5, 6, rng);
  const resa::ForwardResult res = resa::forward(pair.online, x, false);
  try {
    resa::backward(pair.online, res.tape, Matrix(5, 4, 0.0));
    FAIL() << "expected StaleTape";
  } catch (const resa::Error& e) {
    EXPECT_EQ(e.kind(), "StaleTape");
  }
}

TEST(Backward, FullNetworkMatchesFiniteDifferences) {
  EXPECT_LE(resa::gradcheck_network(201, false), 1e-5);
  EXPECT_LE(resa::gradcheck_network(202, true), 1e-5);
}

TEST(Ema, EndpointCoefficients) {
  Rng rng(7);
  NetworkPair pair = resa::make_network_pair(small_shape(), 0.0, rng);
  // Diverge the branches, then m = 0 snaps momentum onto online.
  pair.online.encoder.layers[0].weight(0, 0) += 1.5;
  resa::ema_update(pair);
  EXPECT_EQ(resa::momentum_gap(pair), 0.0);

  pair.momentum_coeff = 1.0;
  pair.online.encoder.layers[0].weight(0, 0) += 2.0;
  const double before = pair.momentum.encoder.layers[0].weight(0, 0);
  resa::ema_update(pair);
  EXPECT_EQ(pair.momentum.encoder.layers[0].weight(0, 0), before);
}

TEST(Ema, ScalarBlend) {
  Rng rng(8);
  NetworkPair pair = resa::make_network_pair(small_shape(), 0.99, rng);
  pair.momentum.encoder.layers[0].weight(0, 0) = 0.0;
  pair.online.encoder.layers[0].weight(0, 0) = 1.0;
  resa::ema_update(pair);
  EXPECT_NEAR(pair.momentum.encoder.layers[0].weight(0, 0), 0.01, 1e-15);
}

TEST(Ema, GapContractsUnderFrozenOnline) {
  Rng rng(9);
  NetworkPair pair = resa::make_network_pair(small_shape(), 0.97, rng);
  for (double& v : pair.momentum.projector.layers[0].weight.data) v += 0.5;
  double gap = resa::momentum_gap(pair);
  for (int i = 0; i < 20; ++i) {
    resa::ema_update(pair);
    const double next = resa::momentum_gap(pair);
    ASSERT_LE(next, gap + 1e-15);
    gap = next;
  }
  EXPECT_LT(gap, 0.5);
}

TEST(Ema, RejectsOutOfRangeCoefficient) {
  Rng rng(10);
  NetworkPair pair = resa::make_network_pair(small_shape(), 0.5, rng);
  pair.momentum_coeff = 1.5;
  EXPECT_THROW(resa::ema_update(pair), resa::Error);
}

TEST(Schedule, WarmupPeakAndFloor) {
  resa::OptimizerState opt;
  opt.learning_rate_peak = 0.3;
  opt.warmup_steps = 100;
  opt.total_steps = 1000;
  opt.min_lr_fraction = 0.1;
  EXPECT_DOUBLE_EQ(resa::scheduled_lr(opt, 0), 0.0);
  EXPECT_DOUBLE_EQ(resa::scheduled_lr(opt, 50), 0.15);
  EXPECT_EQ(resa::scheduled_lr(opt, 100), 0.3);                // peak exactly
  EXPECT_EQ(resa::scheduled_lr(opt, 1000), 0.1 * 0.3);         // 0.1 x peak exactly
  EXPECT_NEAR(resa::scheduled_lr(opt, 550), 0.5 * (0.3 + 0.03), 1e-15);  // midpoint
  for (std::uint64_t s = 0; s <= 1000; s += 25) {
    EXPECT_GE(resa::scheduled_lr(opt, s), 0.0);
    if (s >= opt.warmup_steps) {
      EXPECT_GE(resa::scheduled_lr(opt, s), 0.03 - 1e-15);
    }
  }
}

TEST(Sgd, PlainScalarStep) {
  Branch b;
  b.encoder = identity_mlp(1);
  b.projector = identity_mlp(1);
  b.encoder.layers[0].weight(0, 0) = 1.0;
  resa::BranchGrads grads;
  grads.weight = {Matrix(1, 1, 1.0), Matrix(1, 1, 0.0)};
  grads.bias = {{0.0}, {0.0}};
  resa::OptimizerState opt;
  opt.learning_rate_peak = 0.1;
  opt.weight_decay = 0.0;
  opt.momentum_sgd = 0.0;
  opt.warmup_steps = 0;
  opt.total_steps = 1000000;  // effectively flat at the peak for step 0
  resa::sgd_step(b, grads, opt);
  EXPECT_NEAR(b.encoder.layers[0].weight(0, 0), 0.9, 1e-15);
  EXPECT_EQ(opt.step, 1u);
}

TEST(Sgd, HeavyBallAccumulates) {
  Branch b;
  b.encoder = identity_mlp(1);
  b.projector = identity_mlp(1);
  b.encoder.layers[0].weight(0, 0) = 0.0;
  resa::BranchGrads grads;
  grads.weight = {Matrix(1, 1, 1.0), Matrix(1, 1, 0.0)};
  grads.bias = {{0.0}, {0.0}};
  resa::OptimizerState opt;
  opt.learning_rate_peak = 0.1;
  opt.weight_decay = 0.0;
  opt.momentum_sgd = 0.5;
  opt.warmup_steps = 0;
  opt.total_steps = 1000000000;
  resa::sgd_step(b, grads, opt);   // v = 1, w = -0.1
  resa::sgd_step(b, grads, opt);   // v = 1.5, w ~= -0.25
  EXPECT_NEAR(b.encoder.layers[0].weight(0, 0), -0.25, 1e-9);
}

TEST(Sgd, DecoupledDecayLeavesBiasesAlone) {
  Branch b;
  b.encoder = identity_mlp(1);
  b.projector = identity_mlp(1);
  b.encoder.layers[0].bias[0] = 2.0;
  resa::BranchGrads grads;
  grads.weight = {Matrix(1, 1, 0.0), Matrix(1, 1, 0.0)};
  grads.bias = {{0.0}, {0.0}};
  resa::OptimizerState opt;
  opt.learning_rate_peak = 0.1;
  opt.weight_decay = 0.5;
  opt.momentum_sgd = 0.0;
  opt.warmup_steps = 0;
  opt.total_steps = 1000000000;
  resa::sgd_step(b, grads, opt);
  EXPECT_LT(b.encoder.layers[0].weight(0, 0), 1.0);  // decayed
  EXPECT_DOUBLE_EQ(b.encoder.layers[0].bias[0], 2.0);
}

TEST(Network, DeterministicConstructionAndSteps) {
  Rng a(42), b(42);
  NetworkPair pa = resa::make_network_pair(small_shape(true), 0.99, a);
  NetworkPair pb = resa::make_network_pair(small_shape(true), 0.99, b);
  auto la = resa::detail::flat_layers(pa.online);
  auto lb = resa::detail::flat_layers(pb.online);
  ASSERT_EQ(la.size(), lb.size());
  for (std::size_t i = 0; i < la.size(); ++i)
    ASSERT_EQ(la[i]->weight.data, lb[i]->weight.data);

  Rng data_rng(43);
  const Matrix x = Matrix::gaussian(6, 6, data_rng);
  resa::OptimizerState oa, ob;
  oa.total_steps = ob.total_steps = 100;
  for (int step = 0; step < 3; ++step) {
    const resa::ForwardResult fa = resa::forward(pa.online, x, true);
    const resa::ForwardResult fb = resa::forward(pb.online, x, true);
    ASSERT_EQ(fa.embedding.data, fb.embedding.data);
    Matrix g(fa.embedding.rows, fa.embedding.cols, 0.1);
    resa::sgd_step(pa.online, resa::backward(pa.online, fa.tape, g), oa);
    resa::sgd_step(pb.online, resa::backward(pb.online, fb.tape, g), ob);
  }
  auto la2 = resa::detail::flat_layers(pa.online);
  auto lb2 = resa::detail::flat_layers(pb.online);
  for (std::size_t i = 0; i < la2.size(); ++i)
    ASSERT_EQ(la2[i]->weight.data, lb2[i]->weight.data);
}

TEST(Network, MomentumMirrorsOnlineShapes) {
  Rng rng(44);
  const NetworkPair pair = resa::make_network_pair(small_shape(true), 0.99, rng);
  ASSERT_EQ(pair.momentum.encoder.layers.size(), pair.online.encoder.layers.size());
  ASSERT_EQ(pair.momentum.projector.layers.size(), pair.online.projector.layers.size());
  EXPECT_FALSE(pair.momentum.predictor.has_value());
  EXPECT_EQ(resa::momentum_gap(pair), 0.0);  // exact copy at init
}

TEST(Network, ShapeValidation) {
  NetworkShape s = small_shape();
  s.projector_dims = {99, 8, 4};  // does not match encoder output
  Rng rng(45);
  EXPECT_THROW(resa::make_network_pair(s, 0.99, rng), resa::Error);
}
