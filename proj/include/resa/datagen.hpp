#pragma once

// ---------------------------------------------------------------------------
// Synthetic labeled datasets and vector-space augmentation.
//
// generate(): class means sit on a sphere in a low-dimensional latent space,
// scaled so the smallest pairwise mean distance is class_separation times the
// unit within-class standard deviation. Samples are isotropic Gaussians around
// their mean, lifted into the ambient space through a random orthonormal map,
// optionally pushed through a fixed random two-layer tanh warp that bends the
// class manifolds nonlinearly. Class sizes follow an exponential profile when
// imbalance_factor < 1: count_c = round(samples_per_class * f^(c / (C-1))), so
// largest / smallest = 1 / f up to rounding.
//
// augment(): per sample, a multiplicative jitter (1 + u), u ~ U[-j, j], then
// per coordinate Bernoulli zero-masking with probability p, then additive
// Gaussian noise sigma. Weak mode keeps only the noise term.
// ---------------------------------------------------------------------------

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "resa/error.hpp"
#include "resa/matrix.hpp"
#include "resa/numerics.hpp"
#include "resa/rng.hpp"

namespace resa {

struct DatasetSpec {
  std::size_t n_classes = 8;
  std::size_t samples_per_class = 256;  // largest class when imbalanced
  std::size_t ambient_dim = 64;
  std::size_t latent_dim = 8;
  double class_separation = 3.0;
  bool warp = true;
  double imbalance_factor = 1.0;  // smallest / largest class size, in (0, 1]

  void validate() const {
    require(n_classes >= 1, "DegenerateSpec", "need at least one class");
    require(samples_per_class >= 1, "DegenerateSpec", "need at least one sample per class");
    require(latent_dim >= 1 && ambient_dim >= 1, "DegenerateSpec", "dims must be >= 1");
    require(ambient_dim >= latent_dim, "DegenerateSpec",
            "ambient_dim must be >= latent_dim");
    require(class_separation >= 0.0, "DegenerateSpec", "separation must be >= 0");
    require(imbalance_factor > 0.0 && imbalance_factor <= 1.0, "DegenerateSpec",
            "imbalance_factor must lie in (0, 1]");
  }

  std::vector<std::size_t> class_counts() const {
    std::vector<std::size_t> counts(n_classes, samples_per_class);
    if (imbalance_factor < 1.0 && n_classes > 1) {
      for (std::size_t c = 0; c < n_classes; ++c) {
        const double expo = static_cast<double>(c) / static_cast<double>(n_classes - 1);
        const double raw = static_cast<double>(samples_per_class) *
                           std::pow(imbalance_factor, expo);
        counts[c] = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(raw)));
      }
    }
    return counts;
  }
};

struct Dataset {
  Matrix x;
  std::vector<int> labels;
};

namespace detail {

// Orthonormal columns via Gram-Schmidt on a Gaussian draw; maps latent
// coordinates into the ambient space without distorting distances.
inline Matrix orthonormal_lift(std::size_t ambient, std::size_t latent, Rng& rng) {
  Matrix q(ambient, latent);
  for (std::size_t c = 0; c < latent; ++c) {
    for (;;) {
      for (std::size_t r = 0; r < ambient; ++r) q(r, c) = rng.normal();
      for (std::size_t prev = 0; prev < c; ++prev) {
        double dot = 0.0;
        for (std::size_t r = 0; r < ambient; ++r) dot += q(r, c) * q(r, prev);
        for (std::size_t r = 0; r < ambient; ++r) q(r, c) -= dot * q(r, prev);
      }
      double norm = 0.0;
      for (std::size_t r = 0; r < ambient; ++r) norm += q(r, c) * q(r, c);
      norm = std::sqrt(norm);
      if (norm > 1e-8) {
        for (std::size_t r = 0; r < ambient; ++r) q(r, c) /= norm;
        break;
      }
    }
  }
  return q;
}

}  // namespace detail

inline Dataset generate(const DatasetSpec& spec, Rng& rng) {
  spec.validate();
  const std::vector<std::size_t> counts = spec.class_counts();
  std::size_t n = 0;
  for (std::size_t c : counts) n += c;

  Rng mean_rng = rng.split(1);
  Rng sample_rng = rng.split(2);
  Rng lift_rng = rng.split(3);
  Rng warp_rng = rng.split(4);

  // Unit directions for the class means, rescaled so the closest pair is
  // class_separation apart (within-class std is 1 per coordinate).
  Matrix means(spec.n_classes, spec.latent_dim);
  for (;;) {
    for (std::size_t c = 0; c < spec.n_classes; ++c)
      for (std::size_t d = 0; d < spec.latent_dim; ++d) means(c, d) = mean_rng.normal();
    means = l2_normalize_rows(means);
    if (spec.n_classes == 1) break;
    double min_dist = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < spec.n_classes; ++a)
      for (std::size_t b = a + 1; b < spec.n_classes; ++b) {
        double acc = 0.0;
        for (std::size_t d = 0; d < spec.latent_dim; ++d) {
          const double diff = means(a, d) - means(b, d);
          acc += diff * diff;
        }
        min_dist = std::min(min_dist, std::sqrt(acc));
      }
    if (min_dist > 1e-6) {
      const double radius = spec.class_separation / min_dist;
      for (double& v : means.data) v *= radius;
      break;
    }
    // Mean collision (vanishing probability): redraw.
  }

  Matrix latent(n, spec.latent_dim);
  Dataset out;
  out.labels.reserve(n);
  std::size_t row = 0;
  for (std::size_t c = 0; c < spec.n_classes; ++c) {
    for (std::size_t s = 0; s < counts[c]; ++s, ++row) {
      for (std::size_t d = 0; d < spec.latent_dim; ++d)
        latent(row, d) = means(c, d) + sample_rng.normal();
      out.labels.push_back(static_cast<int>(c));
    }
  }

  const Matrix lift = detail::orthonormal_lift(spec.ambient_dim, spec.latent_dim, lift_rng);
  out.x = matmul_bt(latent, lift);  // n x ambient

  if (spec.warp) {
    // Fixed random residual warp: x + W2 tanh(W1 x + b1), drawn once per
    // dataset. The residual form bends class manifolds without erasing them.
    const std::size_t a = spec.ambient_dim;
    const double scale = 1.0 / std::sqrt(static_cast<double>(a));
    Matrix w1 = Matrix::gaussian(a, a, warp_rng, 1.6 * scale);
    Matrix w2 = Matrix::gaussian(a, a, warp_rng, 1.6 * scale);
    std::vector<double> b1(a);
    for (double& v : b1) v = 0.5 * warp_rng.normal();
    Matrix hidden = matmul(out.x, w1);
    for (std::size_t i = 0; i < hidden.rows; ++i) {
      double* r = hidden.row(i);
      for (std::size_t j = 0; j < a; ++j) r[j] = std::tanh(r[j] + b1[j]);
    }
    add_in_place(out.x, matmul(hidden, w2));
  }
  return out;
}

struct AugmentSpec {
  double noise_sigma = 0.5;
  double mask_prob = 0.3;
  double scale_jitter = 0.2;
  bool weak = false;

  static AugmentSpec standard(double sigma = 0.5, double p = 0.3, double j = 0.2) {
    return AugmentSpec{sigma, p, j, false};
  }

  // Weak mode is noise-only by construction.
  static AugmentSpec weak_view(double sigma = 0.1) {
    return AugmentSpec{sigma, 0.0, 0.0, true};
  }

  void validate() const {
    require(noise_sigma >= 0.0, "DegenerateSpec", "noise_sigma must be >= 0");
    require(mask_prob >= 0.0 && mask_prob < 1.0, "DegenerateSpec",
            "mask_prob must lie in [0, 1)");
    require(scale_jitter >= 0.0, "DegenerateSpec", "scale_jitter must be >= 0");
    if (weak)
      require(mask_prob == 0.0 && scale_jitter == 0.0, "DegenerateSpec",
              "weak augmentation admits noise only");
  }
};

inline Matrix augment(const Matrix& x, const AugmentSpec& spec, Rng& rng) {
  spec.validate();
  Matrix out = x;
  for (std::size_t i = 0; i < x.rows; ++i) {
    double* r = out.row(i);
    if (spec.scale_jitter > 0.0) {
      const double factor = 1.0 + rng.uniform(-spec.scale_jitter, spec.scale_jitter);
      for (std::size_t j = 0; j < x.cols; ++j) r[j] *= factor;
    }
    if (spec.mask_prob > 0.0) {
      for (std::size_t j = 0; j < x.cols; ++j)
        if (rng.uniform() < spec.mask_prob) r[j] = 0.0;
    }
    if (spec.noise_sigma > 0.0) {
      for (std::size_t j = 0; j < x.cols; ++j) r[j] += spec.noise_sigma * rng.normal();
    }
  }
  return out;
}

}  // namespace resa
