#pragma once

// ---------------------------------------------------------------------------
// Analytic-vs-numeric gradient suites. Every suite perturbs raw parameters or
// inputs one at a time, measures the loss with central differences
// (f(x+h) - f(x-h)) / 2h at h = 1e-5, and compares against the analytic
// gradient. The numeric side only ever calls forward evaluations, so it is an
// independent oracle for the backward path.
//
// Reported error per suite is max over checked entries of
//   |analytic - numeric| / max(|analytic| + |numeric|, 1e-4).
//
// Suites also verify two closed-form identities at 1e-12: the similarity
// gradient of the self-assignment loss equals (P - A) / tau entrywise, and
// the InfoNCE similarity-gradient rows sum to zero.
// ---------------------------------------------------------------------------

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "resa/losses.hpp"
#include "resa/matrix.hpp"
#include "resa/network.hpp"
#include "resa/numerics.hpp"
#include "resa/rng.hpp"
#include "resa/sinkhorn.hpp"

namespace resa {

struct GradcheckReport {
  std::string suite;
  double worst_error = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

namespace gradcheck_detail {

constexpr double kStep = 1e-5;

inline double relative_error(double analytic, double numeric) {
  const double scale = std::max(std::fabs(analytic) + std::fabs(numeric), 1e-4);
  return std::fabs(analytic - numeric) / scale;
}

inline double central_difference(const std::function<double()>& f, double& slot) {
  const double original = slot;
  slot = original + kStep;
  const double hi = f();
  slot = original - kStep;
  const double lo = f();
  slot = original;
  return (hi - lo) / (2.0 * kStep);
}

// Worst relative error between an analytic gradient matrix and central
// differences over every entry of `slot_matrix`.
inline double check_matrix_grad(Matrix& slot_matrix, const Matrix& analytic,
                                const std::function<double()>& f) {
  double worst = 0.0;
  for (std::size_t i = 0; i < slot_matrix.data.size(); ++i) {
    const double numeric = central_difference(f, slot_matrix.data[i]);
    worst = std::max(worst, relative_error(analytic.data[i], numeric));
  }
  return worst;
}

}  // namespace gradcheck_detail

// Loss gradients w.r.t. both embedding batches (and prototypes for the
// swapped-prediction baseline, with assignments held fixed).
inline double gradcheck_losses(std::uint64_t seed, LossVariant variant) {
  Rng rng(seed);
  const std::size_t m = 8, d = 16, k = 4;
  Matrix z = Matrix::gaussian(m, d, rng);
  Matrix zp = Matrix::gaussian(m, d, rng);

  double worst = 0.0;
  if (variant == LossVariant::ReSA) {
    const Matrix h = l2_normalize_rows(Matrix::gaussian(m, d, rng));
    const Matrix a = sinkhorn_self_assignment(cosine_self_similarity(h)).values;
    auto f = [&] { return resa_loss(z, zp, a, {0.4, LossVariant::ReSA}).value; };
    const LossResult res = resa_loss(z, zp, a, {0.4, LossVariant::ReSA});
    worst = std::max(worst, gradcheck_detail::check_matrix_grad(z, res.grad_z, f));
    worst = std::max(worst, gradcheck_detail::check_matrix_grad(zp, res.grad_zp, f));
  } else if (variant == LossVariant::InfoNCE) {
    auto f = [&] { return infonce_loss(z, zp, {0.1, LossVariant::InfoNCE}).value; };
    const LossResult res = infonce_loss(z, zp, {0.1, LossVariant::InfoNCE});
    worst = std::max(worst, gradcheck_detail::check_matrix_grad(z, res.grad_z, f));
    worst = std::max(worst, gradcheck_detail::check_matrix_grad(zp, res.grad_zp, f));
  } else {
    PrototypeBank bank = PrototypeBank::random(k, d, rng);
    const Matrix q =
        sinkhorn_rectangular(matmul_bt(l2_normalize_rows(z), l2_normalize_rows(bank.c)));
    const Matrix qp =
        sinkhorn_rectangular(matmul_bt(l2_normalize_rows(zp), l2_normalize_rows(bank.c)));
    auto f = [&] {
      return swav_loss_with_assignments(z, zp, bank, q, qp, {0.1, LossVariant::SwAV})
          .value;
    };
    const LossResult res =
        swav_loss_with_assignments(z, zp, bank, q, qp, {0.1, LossVariant::SwAV});
    worst = std::max(worst, gradcheck_detail::check_matrix_grad(z, res.grad_z, f));
    worst = std::max(worst, gradcheck_detail::check_matrix_grad(zp, res.grad_zp, f));
    worst = std::max(worst, gradcheck_detail::check_matrix_grad(bank.c, res.grad_prototypes, f));
  }
  return worst;
}

namespace gradcheck_detail {

// Central differences are only a valid oracle where the loss is smooth in the
// probed neighborhood. A tiny random network can break that in two ways: an
// exactly zero embedding row at init (all hidden ReLUs dead for one sample,
// rejected by the forward pass as ZeroRow), or a hidden pre-activation within
// the finite-difference step of the ReLU kink. Both are properties of the
// draw, not of the gradient code; retry with a shifted seed until the
// configuration is regular. Deterministic given `seed`.
template <typename Body>
inline double retry_degenerate(std::uint64_t seed, Body&& body) {
  for (std::uint64_t attempt = 0;; ++attempt) {
    try {
      return body(seed + 7919 * attempt);
    } catch (const Error& e) {
      const bool retriable =
          e.kind() == std::string("ZeroRow") || e.kind() == std::string("NearKink");
      if (!retriable || attempt >= 64) throw;
    }
  }
}

// Smallest |pre-activation| across the hidden (ReLU) units of a forward pass.
inline double min_hidden_preactivation(const Branch& branch, const Matrix& x) {
  const auto layers = detail::flat_layers(branch);
  const auto relu_after = detail::relu_flags(branch);
  double lo = std::numeric_limits<double>::infinity();
  Matrix a = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Matrix pre = matmul(a, layers[l]->weight);
    for (std::size_t i = 0; i < pre.rows; ++i) {
      double* r = pre.row(i);
      for (std::size_t j = 0; j < pre.cols; ++j) r[j] += layers[l]->bias[j];
    }
    if (relu_after[l]) {
      for (double& v : pre.data) {
        lo = std::min(lo, std::fabs(v));
        v = v > 0.0 ? v : 0.0;
      }
    }
    a = std::move(pre);
  }
  return lo;
}

}  // namespace gradcheck_detail

// Full branch (encoder -> projector -> optional predictor -> normalize) under
// a self-assignment loss head: every weight and bias of both forward passes,
// with the assignment pinned.
inline double gradcheck_network_once(std::uint64_t seed, bool use_predictor,
                                     bool corrupt_for_test = false) {
  Rng rng(seed);
  NetworkShape shape;
  shape.encoder_dims = {6, 9, 5};
  shape.projector_dims = {5, 7, 4};
  shape.predictor_dims = {4, 6, 4};
  shape.use_predictor = use_predictor;
  NetworkPair pair = make_network_pair(shape, 0.99, rng);

  const std::size_t m = 5;
  const Matrix x1 = Matrix::gaussian(m, 6, rng);
  const Matrix x2 = Matrix::gaussian(m, 6, rng);
  const Matrix h = l2_normalize_rows(Matrix::gaussian(m, 3, rng));
  const Matrix a = sinkhorn_self_assignment(cosine_self_similarity(h)).values;
  const LossConfig loss_cfg{0.4, LossVariant::ReSA};

  const double margin = std::min(gradcheck_detail::min_hidden_preactivation(pair.online, x1),
                                 gradcheck_detail::min_hidden_preactivation(pair.online, x2));
  if (margin < 1e-3)
    fail("NearKink", "pre-activation " + std::to_string(margin) + " from the ReLU kink");

  auto loss_value = [&] {
    const Matrix e1 = forward(pair.online, x1, false).embedding;
    const Matrix e2 = forward(pair.online, x2, false).embedding;
    return resa_loss(e1, e2, a, loss_cfg).value;
  };

  ForwardResult f1 = forward(pair.online, x1, true);
  ForwardResult f2 = forward(pair.online, x2, true);
  const LossResult res = resa_loss(f1.embedding, f2.embedding, a, loss_cfg);
  BranchGrads grads = backward(pair.online, f1.tape, res.grad_z);
  grads.accumulate(backward(pair.online, f2.tape, res.grad_zp));

  if (corrupt_for_test && !grads.weight.empty() && !grads.weight[0].data.empty())
    grads.weight[0].data[0] = -grads.weight[0].data[0] - 1.0;

  double worst = 0.0;
  auto layers = detail::flat_layers(pair.online);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    worst = std::max(worst, gradcheck_detail::check_matrix_grad(
                                layers[l]->weight, grads.weight[l], loss_value));
    for (std::size_t j = 0; j < layers[l]->bias.size(); ++j) {
      const double numeric =
          gradcheck_detail::central_difference(loss_value, layers[l]->bias[j]);
      worst = std::max(worst,
                       gradcheck_detail::relative_error(grads.bias[l][j], numeric));
    }
  }
  return worst;
}

inline double gradcheck_network(std::uint64_t seed, bool use_predictor,
                                bool corrupt_for_test = false) {
  return gradcheck_detail::retry_degenerate(seed, [&](std::uint64_t s) {
    return gradcheck_network_once(s, use_predictor, corrupt_for_test);
  });
}

// Closed-form identities: per-direction similarity gradient (P - A)/tau for
// the self-assignment loss, and zero row sums for the InfoNCE gradient.
inline double gradcheck_identities(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t m = 8, d = 16;
  const Matrix z = l2_normalize_rows(Matrix::gaussian(m, d, rng));
  const Matrix zp = l2_normalize_rows(Matrix::gaussian(m, d, rng));
  const Matrix h = l2_normalize_rows(Matrix::gaussian(m, d, rng));
  const Matrix a = sinkhorn_self_assignment(cosine_self_similarity(h)).values;
  const double tau = 0.4;

  double worst = 0.0;
  const LossResult res = resa_loss(z, zp, a, {tau, LossVariant::ReSA});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      const double expected = (res.probabilities(i, j) - a(i, j)) / tau;
      worst = std::max(worst, std::fabs(res.grad_similarity(i, j) - expected));
    }

  const LossResult nce = infonce_loss(z, zp, {tau, LossVariant::InfoNCE});
  for (std::size_t i = 0; i < m; ++i) {
    double off_mass = 0.0;
    double row_sum = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      row_sum += nce.grad_similarity(i, j);
      if (j == i) continue;
      off_mass += nce.probabilities(i, j);
      worst = std::max(worst, std::fabs(nce.grad_similarity(i, j) -
                                        nce.probabilities(i, j) / tau));
    }
    worst = std::max(worst, std::fabs(nce.grad_similarity(i, i) + off_mass / tau));
    worst = std::max(worst, std::fabs(row_sum));
  }
  return worst;
}

// The suites behind the gradcheck command. 20 network configurations (with
// and without predictor), the three loss oracles, and the closed forms.
inline std::vector<GradcheckReport> run_gradcheck(std::uint64_t seed,
                                                  bool corrupt_for_test = false) {
  std::vector<GradcheckReport> reports;
  auto add = [&](const std::string& name, double worst, double tol) {
    reports.push_back({name, worst, tol, worst <= tol});
  };

  double worst = 0.0;
  for (int i = 0; i < 10; ++i)
    worst = std::max(worst, gradcheck_network(seed + i, false,
                                              corrupt_for_test && i == 0));
  add("network", worst, 1e-5);

  worst = 0.0;
  for (int i = 0; i < 10; ++i)
    worst = std::max(worst, gradcheck_network(seed + 100 + i, true));
  add("network_predictor", worst, 1e-5);

  add("loss_self_assignment", gradcheck_losses(seed + 1, LossVariant::ReSA), 1e-6);
  add("loss_infonce", gradcheck_losses(seed + 2, LossVariant::InfoNCE), 1e-6);
  add("loss_swapped_prediction", gradcheck_losses(seed + 3, LossVariant::SwAV), 1e-6);
  add("closed_form_identities", gradcheck_identities(seed + 4), 1e-12);
  return reports;
}

}  // namespace resa
