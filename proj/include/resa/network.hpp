#pragma once

// ---------------------------------------------------------------------------
// Minimal differentiable MLP stack: encoder -> projector -> optional
// predictor -> row L2 normalization. Hidden layers use ReLU, output layers
// are identity, biases everywhere. forward() returns the encoding H (encoder
// output, pre-projector) and the embedding Z (normalized head output), plus a
// tape of intermediate activations when gradients are wanted. backward() runs
// reverse accumulation through linear / ReLU / normalize and returns one
// gradient per parameter tensor.
//
// The momentum half of a NetworkPair mirrors the online encoder + projector
// (never the predictor) and is advanced by ema_update():
//   theta' <- m * theta' + (1 - m) * theta.
// ---------------------------------------------------------------------------

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "resa/error.hpp"
#include "resa/matrix.hpp"
#include "resa/numerics.hpp"
#include "resa/rng.hpp"

namespace resa {

struct MlpSpec {
  std::vector<std::size_t> layer_dims;  // input, hidden..., output

  std::size_t in_dim() const { return layer_dims.front(); }
  std::size_t out_dim() const { return layer_dims.back(); }

  void validate() const {
    require(layer_dims.size() >= 2, "ShapeMismatch",
            "an MLP needs at least input and output dims");
    for (std::size_t d : layer_dims)
      require(d >= 1, "ShapeMismatch", "all layer dims must be >= 1");
  }
};

struct LinearLayer {
  Matrix weight;             // in x out
  std::vector<double> bias;  // out
};

struct Mlp {
  MlpSpec spec;
  std::vector<LinearLayer> layers;
};

// He-normal weights, zero biases.
inline Mlp make_mlp(const MlpSpec& spec, Rng& rng) {
  spec.validate();
  Mlp mlp;
  mlp.spec = spec;
  for (std::size_t l = 0; l + 1 < spec.layer_dims.size(); ++l) {
    const std::size_t fan_in = spec.layer_dims[l];
    const std::size_t fan_out = spec.layer_dims[l + 1];
    LinearLayer layer;
    layer.weight = Matrix::gaussian(fan_in, fan_out, rng,
                                    std::sqrt(2.0 / static_cast<double>(fan_in)));
    layer.bias.assign(fan_out, 0.0);
    mlp.layers.push_back(std::move(layer));
  }
  return mlp;
}

// One half of the pair: the online branch may carry a predictor, the momentum
// branch never does.
struct Branch {
  Mlp encoder;
  Mlp projector;
  std::optional<Mlp> predictor;
};

// Default encoder is a deep narrow stack on purpose: at initialization its
// random ReLU layers crowd all pairwise angles together, so untrained
// encodings carry little cluster structure and training has to build it.
// A single wide hidden layer preserves the input geometry almost perfectly
// at init, which leaves nothing for the run to demonstrate.
struct NetworkShape {
  std::vector<std::size_t> encoder_dims = {64, 48, 32, 24, 32, 48, 64};
  std::vector<std::size_t> projector_dims = {64, 64, 32};
  std::vector<std::size_t> predictor_dims = {32, 64, 32};
  bool use_predictor = false;

  void validate() const {
    MlpSpec{encoder_dims}.validate();
    MlpSpec{projector_dims}.validate();
    require(encoder_dims.back() == projector_dims.front(), "ShapeMismatch",
            "projector input dim must equal encoder output dim");
    if (use_predictor) {
      MlpSpec{predictor_dims}.validate();
      require(projector_dims.back() == predictor_dims.front(), "ShapeMismatch",
              "predictor input dim must equal projector output dim");
      require(predictor_dims.back() == projector_dims.back(), "ShapeMismatch",
              "predictor must map back to the embedding dim");
    }
  }
};

struct NetworkPair {
  Branch online;
  Branch momentum;  // encoder + projector only
  double momentum_coeff = 0.99;
};

inline NetworkPair make_network_pair(const NetworkShape& shape,
                                     double momentum_coeff, Rng& rng) {
  shape.validate();
  require(momentum_coeff >= 0.0 && momentum_coeff <= 1.0, "CoefficientOutOfRange",
          "momentum coefficient must lie in [0, 1]");
  NetworkPair pair;
  pair.momentum_coeff = momentum_coeff;
  pair.online.encoder = make_mlp(MlpSpec{shape.encoder_dims}, rng);
  pair.online.projector = make_mlp(MlpSpec{shape.projector_dims}, rng);
  if (shape.use_predictor)
    pair.online.predictor = make_mlp(MlpSpec{shape.predictor_dims}, rng);
  pair.momentum.encoder = pair.online.encoder;
  pair.momentum.projector = pair.online.projector;
  return pair;
}

namespace detail {

inline std::vector<const LinearLayer*> flat_layers(const Branch& b) {
  std::vector<const LinearLayer*> out;
  for (const auto& l : b.encoder.layers) out.push_back(&l);
  for (const auto& l : b.projector.layers) out.push_back(&l);
  if (b.predictor)
    for (const auto& l : b.predictor->layers) out.push_back(&l);
  return out;
}

inline std::vector<LinearLayer*> flat_layers(Branch& b) {
  std::vector<LinearLayer*> out;
  for (auto& l : b.encoder.layers) out.push_back(&l);
  for (auto& l : b.projector.layers) out.push_back(&l);
  if (b.predictor)
    for (auto& l : b.predictor->layers) out.push_back(&l);
  return out;
}

// relu_after[l] is true for hidden layers of each sub-MLP, false for every
// sub-MLP's output layer.
inline std::vector<bool> relu_flags(const Branch& b) {
  std::vector<bool> out;
  auto push = [&](const Mlp& mlp) {
    for (std::size_t l = 0; l < mlp.layers.size(); ++l)
      out.push_back(l + 1 < mlp.layers.size());
  };
  push(b.encoder);
  push(b.projector);
  if (b.predictor) push(*b.predictor);
  return out;
}

}  // namespace detail

struct ForwardTape {
  bool valid = false;
  std::vector<Matrix> inputs;  // inputs[l] = input to linear layer l
  Matrix pre_norm;             // head output before row normalization
  Matrix z_unit;               // normalized embedding
  std::size_t layer_count = 0;
};

struct ForwardResult {
  Matrix encoding;   // H, encoder output
  Matrix embedding;  // Z, row-normalized head output
  ForwardTape tape;
};

inline ForwardResult forward(const Branch& branch, const Matrix& x, bool want_grad) {
  const auto layers = detail::flat_layers(branch);
  const auto relu_after = detail::relu_flags(branch);
  require(!layers.empty(), "ShapeMismatch", "branch has no layers");
  require(x.cols == layers.front()->weight.rows, "ShapeMismatch",
          "input dim " + std::to_string(x.cols) + " does not match encoder input " +
              std::to_string(layers.front()->weight.rows));

  ForwardResult out;
  out.tape.valid = want_grad;
  out.tape.layer_count = layers.size();
  const std::size_t encoder_end = branch.encoder.layers.size();

  Matrix a = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (want_grad) out.tape.inputs.push_back(a);
    Matrix pre = matmul(a, layers[l]->weight);
    for (std::size_t i = 0; i < pre.rows; ++i) {
      double* r = pre.row(i);
      for (std::size_t j = 0; j < pre.cols; ++j) r[j] += layers[l]->bias[j];
    }
    if (relu_after[l]) {
      for (double& v : pre.data) v = v > 0.0 ? v : 0.0;
    }
    a = std::move(pre);
    if (l + 1 == encoder_end) out.encoding = a;
  }

  out.embedding = l2_normalize_rows(a);
  if (want_grad) {
    out.tape.pre_norm = std::move(a);
    out.tape.z_unit = out.embedding;
  }
  return out;
}

struct BranchGrads {
  std::vector<Matrix> weight;
  std::vector<std::vector<double>> bias;

  void accumulate(const BranchGrads& other) {
    require(weight.size() == other.weight.size(), "ShapeMismatch",
            "gradient accumulation across different layouts");
    for (std::size_t l = 0; l < weight.size(); ++l) {
      add_in_place(weight[l], other.weight[l]);
      for (std::size_t j = 0; j < bias[l].size(); ++j) bias[l][j] += other.bias[l][j];
    }
  }
};

// d/dx of (x / |x|) applied row-wise, evaluated from taped values.
inline Matrix backward_through_normalize(const ForwardTape& tape,
                                         const Matrix& grad_embedding) {
  Matrix out(tape.pre_norm.rows, tape.pre_norm.cols);
  for (std::size_t i = 0; i < out.rows; ++i) {
    const double* u = tape.z_unit.row(i);
    const double* g = grad_embedding.row(i);
    double* o = out.row(i);
    const double norm = row_norm(tape.pre_norm, i);
    double dot = 0.0;
    for (std::size_t j = 0; j < out.cols; ++j) dot += u[j] * g[j];
    for (std::size_t j = 0; j < out.cols; ++j) o[j] = (g[j] - dot * u[j]) / norm;
  }
  return out;
}

inline BranchGrads backward(const Branch& branch, const ForwardTape& tape,
                            const Matrix& grad_embedding) {
  const auto layers = detail::flat_layers(branch);
  const auto relu_after = detail::relu_flags(branch);
  require(tape.valid, "StaleTape", "tape was not recorded with want_grad");
  require(tape.layer_count == layers.size() && tape.inputs.size() == layers.size(),
          "StaleTape", "tape does not match this branch");
  require(grad_embedding.same_shape(tape.z_unit), "ShapeMismatch",
          "upstream gradient is " + shape_string(grad_embedding) + ", embedding is " +
              shape_string(tape.z_unit));

  BranchGrads grads;
  grads.weight.resize(layers.size());
  grads.bias.resize(layers.size());

  Matrix g = backward_through_normalize(tape, grad_embedding);
  for (std::size_t li = layers.size(); li-- > 0;) {
    if (relu_after[li]) {
      // Post-activation is the next layer's recorded input; ReLU output > 0
      // iff its input was > 0.
      const Matrix& post = tape.inputs[li + 1];
      for (std::size_t i = 0; i < g.data.size(); ++i)
        if (post.data[i] <= 0.0) g.data[i] = 0.0;
    }
    grads.weight[li] = matmul_at(tape.inputs[li], g);
    grads.bias[li].assign(layers[li]->bias.size(), 0.0);
    for (std::size_t i = 0; i < g.rows; ++i) {
      const double* r = g.row(i);
      for (std::size_t j = 0; j < g.cols; ++j) grads.bias[li][j] += r[j];
    }
    if (li > 0) g = matmul_bt(g, layers[li]->weight);
  }
  return grads;
}

// theta' <- m * theta' + (1 - m) * theta on encoder + projector.
inline void ema_update(NetworkPair& pair) {
  const double m = pair.momentum_coeff;
  require(m >= 0.0 && m <= 1.0, "CoefficientOutOfRange",
          "momentum coefficient must lie in [0, 1], got " + std::to_string(m));
  auto blend = [m](Mlp& target, const Mlp& source) {
    require(target.layers.size() == source.layers.size(), "ShapeMismatch",
            "momentum branch does not mirror online branch");
    for (std::size_t l = 0; l < target.layers.size(); ++l) {
      auto& tw = target.layers[l].weight;
      const auto& sw = source.layers[l].weight;
      require(tw.same_shape(sw), "ShapeMismatch", "momentum layer shape mismatch");
      for (std::size_t i = 0; i < tw.data.size(); ++i)
        tw.data[i] = m * tw.data[i] + (1.0 - m) * sw.data[i];
      auto& tb = target.layers[l].bias;
      const auto& sb = source.layers[l].bias;
      for (std::size_t i = 0; i < tb.size(); ++i)
        tb[i] = m * tb[i] + (1.0 - m) * sb[i];
    }
  };
  blend(pair.momentum.encoder, pair.online.encoder);
  blend(pair.momentum.projector, pair.online.projector);
}

// Largest |theta' - theta| over encoder + projector; used by tests and
// collapse diagnostics.
inline double momentum_gap(const NetworkPair& pair) {
  double worst = 0.0;
  auto scan = [&](const Mlp& a, const Mlp& b) {
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
      worst = std::max(worst, max_abs_diff(a.layers[l].weight, b.layers[l].weight));
      for (std::size_t i = 0; i < a.layers[l].bias.size(); ++i)
        worst = std::max(worst, std::fabs(a.layers[l].bias[i] - b.layers[l].bias[i]));
    }
  };
  scan(pair.momentum.encoder, pair.online.encoder);
  scan(pair.momentum.projector, pair.online.projector);
  return worst;
}

}  // namespace resa
