#pragma once

// ---------------------------------------------------------------------------
// Embedding-space objectives and their analytic gradients.
//
// All three losses act on two batches of embeddings Z, Z' (m x d, rows are
// samples). Inputs are re-normalized row-wise inside the loss (idempotent for
// already-normalized rows) and the normalization chain rule is part of
// grad_z / grad_zp, so the reported gradients match finite differences of the
// loss as a function of the raw inputs.
//
// Self-assignment loss: with row-stochastic target A and
// P = softmax_rows(Z Z'^T / tau),
//
//   value = -(1/2m) [ sum_ij A_ij log P_ij + sum_ij A_ji log P'_ij ]
//
// where P' is the softmax of the transposed similarity. The per-direction
// similarity gradient is (P - A) / tau; with A = I this reduces to the
// InfoNCE gradient, whose diagonal is -(1/tau) sum_{k != i} P_ik, and the two
// losses coincide exactly at A = I.
//
// The swapped-prediction baseline scores embeddings against a bank of K
// learnable prototypes; each view is trained to predict the other view's
// balanced (Sinkhorn) assignment. Assignments carry no gradient, which is why
// the loss core is exposed separately with the assignments pinned.
// ---------------------------------------------------------------------------

#include <cmath>
#include <cstddef>
#include <string>

#include "resa/error.hpp"
#include "resa/matrix.hpp"
#include "resa/numerics.hpp"
#include "resa/sinkhorn.hpp"

namespace resa {

enum class LossVariant { ReSA, InfoNCE, SwAV };

inline const char* to_string(LossVariant v) {
  switch (v) {
    case LossVariant::ReSA: return "ReSA";
    case LossVariant::InfoNCE: return "InfoNCE";
    case LossVariant::SwAV: return "SwAV";
  }
  return "?";
}

struct LossConfig {
  double tau = 0.4;  // 0.4 for the self-assignment loss; 0.1 is the usual baseline value
  LossVariant variant = LossVariant::ReSA;
};

struct LossResult {
  double value = 0.0;
  Matrix grad_z;           // d value / d Z, normalization chain rule included
  Matrix grad_zp;          // d value / d Z'
  Matrix grad_similarity;  // forward-direction d loss / d s_ij, before the 1/2m factor
  Matrix probabilities;    // forward-direction softmax rows P
  Matrix grad_prototypes;  // filled by the prototype baseline only
};

struct PrototypeBank {
  Matrix c;  // K x d, rows are prototypes

  std::size_t size() const { return c.rows; }

  static PrototypeBank random(std::size_t k, std::size_t dim, Rng& rng) {
    PrototypeBank bank;
    bank.c = l2_normalize_rows(Matrix::gaussian(k, dim, rng));
    return bank;
  }

  void renormalize() { c = l2_normalize_rows(c); }

  double max_row_norm_error() const {
    double worst = 0.0;
    for (std::size_t i = 0; i < c.rows; ++i)
      worst = std::max(worst, std::fabs(row_norm(c, i) - 1.0));
    return worst;
  }
};

namespace detail {

// Pulls a gradient w.r.t. normalized rows back to the raw input:
// d/dx [g(x/|x|)] = (I - u u^T) g' / |x| per row, u = x/|x|.
inline Matrix normalize_chain(const Matrix& raw, const Matrix& unit,
                              const Matrix& grad_unit) {
  Matrix out(raw.rows, raw.cols);
  for (std::size_t i = 0; i < raw.rows; ++i) {
    const double* u = unit.row(i);
    const double* g = grad_unit.row(i);
    double* o = out.row(i);
    const double norm = row_norm(raw, i);
    double dot = 0.0;
    for (std::size_t j = 0; j < raw.cols; ++j) dot += u[j] * g[j];
    for (std::size_t j = 0; j < raw.cols; ++j) o[j] = (g[j] - dot * u[j]) / norm;
  }
  return out;
}

// -sum_ij T_ij log P_ij, skipping exact-zero targets so an underflowed
// probability cannot poison the sum with 0 * (-inf).
inline double weighted_cross_entropy(const Matrix& target, const Matrix& log_p) {
  double acc = 0.0;
  for (std::size_t i = 0; i < target.data.size(); ++i)
    if (target.data[i] != 0.0) acc -= target.data[i] * log_p.data[i];
  return acc;
}

// d[-sum_j T_ij log P_ij]/d s_ij = (P_ij * rowsum(T)_i - T_ij) / tau.
// Uses the actual row sums of T so the gradient stays exact even when T is
// stochastic only to tolerance.
inline Matrix cross_entropy_similarity_grad(const Matrix& target, const Matrix& p,
                                            double tau) {
  Matrix g(target.rows, target.cols);
  for (std::size_t i = 0; i < target.rows; ++i) {
    const double* trow = target.row(i);
    const double* prow = p.row(i);
    double* grow = g.row(i);
    double tsum = 0.0;
    for (std::size_t j = 0; j < target.cols; ++j) tsum += trow[j];
    for (std::size_t j = 0; j < target.cols; ++j)
      grow[j] = (prow[j] * tsum - trow[j]) / tau;
  }
  return g;
}

inline void check_embedding_pair(const Matrix& z, const Matrix& zp) {
  require(z.same_shape(zp), "ShapeMismatch",
          "embedding batches differ: " + shape_string(z) + " vs " + shape_string(zp));
  require(z.rows >= 1 && z.cols >= 1, "ShapeMismatch", "empty embedding batch");
}

}  // namespace detail

// Cross-entropy between softmax similarity rows and the self-assignment A.
// A must be m x m with rows summing to 1 within 1e-6; it is treated as a
// constant (no gradient flows into it).
inline LossResult resa_loss(const Matrix& z, const Matrix& zp, const Matrix& a,
                            const LossConfig& cfg = {}) {
  detail::check_embedding_pair(z, zp);
  const std::size_t m = z.rows;
  require(a.rows == m && a.cols == m, "ShapeMismatch",
          "assignment is " + shape_string(a) + ", expected " + std::to_string(m) +
              "x" + std::to_string(m));
  for (std::size_t i = 0; i < m; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < m; ++j) sum += a(i, j);
    if (std::fabs(sum - 1.0) > 1e-6)
      fail("RowsNotStochastic",
           "assignment row " + std::to_string(i) + " sums to " + std::to_string(sum));
  }

  const Matrix zn = l2_normalize_rows(z);
  const Matrix zpn = l2_normalize_rows(zp);
  const Matrix sim = matmul_bt(zn, zpn);   // s_ij = z_i . z'_j
  const Matrix sim_t = transpose(sim);

  const Matrix p = softmax_rows(sim, cfg.tau);
  const Matrix log_p = log_softmax_rows(sim, cfg.tau);
  const Matrix p_rev = softmax_rows(sim_t, cfg.tau);
  const Matrix log_p_rev = log_softmax_rows(sim_t, cfg.tau);
  const Matrix a_t = transpose(a);

  LossResult out;
  const double scale = 1.0 / (2.0 * static_cast<double>(m));
  out.value = scale * (detail::weighted_cross_entropy(a, log_p) +
                       detail::weighted_cross_entropy(a_t, log_p_rev));

  const Matrix g_fwd = detail::cross_entropy_similarity_grad(a, p, cfg.tau);
  const Matrix g_rev = detail::cross_entropy_similarity_grad(a_t, p_rev, cfg.tau);
  // Both directions share the similarity matrix (the reverse one is its
  // transpose), so d value / d sim = scale * (g_fwd + g_rev^T).
  const Matrix g_sim = scale * (g_fwd + transpose(g_rev));

  out.grad_z = detail::normalize_chain(z, zn, matmul(g_sim, zpn));
  out.grad_zp = detail::normalize_chain(zp, zpn, matmul_at(g_sim, zn));
  out.grad_similarity = g_fwd;
  out.probabilities = p;
  return out;
}

// Instance-discrimination contrastive loss: each sample's positive is its own
// counterpart in the other view, every other sample is a negative.
inline LossResult infonce_loss(const Matrix& z, const Matrix& zp,
                               const LossConfig& cfg = {}) {
  detail::check_embedding_pair(z, zp);
  const std::size_t m = z.rows;

  const Matrix zn = l2_normalize_rows(z);
  const Matrix zpn = l2_normalize_rows(zp);
  const Matrix sim = matmul_bt(zn, zpn);
  const Matrix sim_t = transpose(sim);

  const Matrix p = softmax_rows(sim, cfg.tau);
  const Matrix log_p = log_softmax_rows(sim, cfg.tau);
  const Matrix p_rev = softmax_rows(sim_t, cfg.tau);
  const Matrix log_p_rev = log_softmax_rows(sim_t, cfg.tau);

  LossResult out;
  const double scale = 1.0 / (2.0 * static_cast<double>(m));
  double acc = 0.0;
  for (std::size_t i = 0; i < m; ++i) acc -= log_p(i, i) + log_p_rev(i, i);
  out.value = scale * acc;

  // Diagonal -(1/tau) sum_{k != i} P_ik, off-diagonal P_ij / tau.
  auto nce_grad = [&](const Matrix& probs) {
    Matrix g(m, m);
    for (std::size_t i = 0; i < m; ++i) {
      double off = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        if (j == i) continue;
        g(i, j) = probs(i, j) / cfg.tau;
        off += probs(i, j);
      }
      g(i, i) = -off / cfg.tau;
    }
    return g;
  };
  const Matrix g_fwd = nce_grad(p);
  const Matrix g_rev = nce_grad(p_rev);
  const Matrix g_sim = scale * (g_fwd + transpose(g_rev));

  out.grad_z = detail::normalize_chain(z, zn, matmul(g_sim, zpn));
  out.grad_zp = detail::normalize_chain(zp, zpn, matmul_at(g_sim, zn));
  out.grad_similarity = g_fwd;
  out.probabilities = p;
  return out;
}

// Swapped-prediction core with the balanced assignments q / qp pinned as
// constants. Exposed so gradient oracles can hold the assignments fixed, which
// is exactly how the gradient treats them.
inline LossResult swav_loss_with_assignments(const Matrix& z, const Matrix& zp,
                                             const PrototypeBank& bank,
                                             const Matrix& q, const Matrix& qp,
                                             const LossConfig& cfg = {}) {
  detail::check_embedding_pair(z, zp);
  const std::size_t m = z.rows;
  const std::size_t k = bank.size();
  require(k >= 2, "TooFewPrototypes",
          "prototype bank needs at least 2 rows, got " + std::to_string(k));
  require(bank.c.cols == z.cols, "ShapeMismatch",
          "prototype dim " + shape_string(bank.c) + " vs embedding dim " +
              std::to_string(z.cols));
  require(q.rows == m && q.cols == k && qp.rows == m && qp.cols == k,
          "ShapeMismatch", "assignment shape mismatch");

  const Matrix zn = l2_normalize_rows(z);
  const Matrix zpn = l2_normalize_rows(zp);
  const Matrix cn = l2_normalize_rows(bank.c);
  const Matrix scores1 = matmul_bt(zn, cn);   // m x K
  const Matrix scores2 = matmul_bt(zpn, cn);

  const Matrix d1 = softmax_rows(scores1, cfg.tau);
  const Matrix log_d1 = log_softmax_rows(scores1, cfg.tau);
  const Matrix d2 = softmax_rows(scores2, cfg.tau);
  const Matrix log_d2 = log_softmax_rows(scores2, cfg.tau);

  LossResult out;
  const double scale = 1.0 / (2.0 * static_cast<double>(m));
  // Swapped: view 1 predicts view 2's assignment and vice versa.
  out.value = scale * (detail::weighted_cross_entropy(qp, log_d1) +
                       detail::weighted_cross_entropy(q, log_d2));

  const Matrix g1 = detail::cross_entropy_similarity_grad(qp, d1, cfg.tau);
  const Matrix g2 = detail::cross_entropy_similarity_grad(q, d2, cfg.tau);

  out.grad_z = detail::normalize_chain(z, zn, scale * matmul(g1, cn));
  out.grad_zp = detail::normalize_chain(zp, zpn, scale * matmul(g2, cn));
  const Matrix g_c = scale * (matmul_at(g1, zn) + matmul_at(g2, zpn));
  out.grad_prototypes = detail::normalize_chain(bank.c, cn, g_c);
  out.grad_similarity = g1;
  out.probabilities = d1;
  return out;
}

// Full swapped-prediction baseline: computes both balanced assignments from
// the current prototypes (gradient-free), then evaluates the core above.
// Prototypes train by backprop from the first step; there is no freeze phase.
inline LossResult swav_loss(const Matrix& z, const Matrix& zp,
                            const PrototypeBank& bank, const LossConfig& cfg = {},
                            const SinkhornConfig& scfg = {}) {
  detail::check_embedding_pair(z, zp);
  require(bank.size() >= 2, "TooFewPrototypes",
          "prototype bank needs at least 2 rows, got " + std::to_string(bank.size()));
  const Matrix zn = l2_normalize_rows(z);
  const Matrix zpn = l2_normalize_rows(zp);
  const Matrix cn = l2_normalize_rows(bank.c);
  const Matrix q = sinkhorn_rectangular(matmul_bt(zn, cn), scfg);
  const Matrix qp = sinkhorn_rectangular(matmul_bt(zpn, cn), scfg);
  return swav_loss_with_assignments(z, zp, bank, q, qp, cfg);
}

}  // namespace resa
