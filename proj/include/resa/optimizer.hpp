#pragma once

// ---------------------------------------------------------------------------
// Heavy-ball SGD with decoupled weight decay and a warmup + floored cosine
// learning-rate schedule:
//
//   lr(t) = peak * t / warmup_steps                      t <= warmup_steps
//   lr(t) = floor + (peak - floor)/2 * (1 + cos(pi u))   otherwise,
//           u = (t - warmup) / (total - warmup), floor = min_lr_fraction * peak
//
// so lr(warmup_steps) = peak exactly and lr(total_steps) = min_lr_fraction *
// peak exactly. Weight decay applies to weight matrices only, not biases.
// ---------------------------------------------------------------------------

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "resa/error.hpp"
#include "resa/matrix.hpp"
#include "resa/network.hpp"

namespace resa {

struct OptimizerState {
  double learning_rate_peak = 0.3;
  double weight_decay = 1e-4;
  double momentum_sgd = 0.9;
  std::uint64_t step = 0;
  std::uint64_t warmup_steps = 0;
  std::uint64_t total_steps = 1;
  double min_lr_fraction = 0.1;

  // Velocity buffers, shaped on first use.
  std::vector<Matrix> velocity_w;
  std::vector<std::vector<double>> velocity_b;
};

inline double scheduled_lr(const OptimizerState& opt, std::uint64_t step) {
  const double peak = opt.learning_rate_peak;
  // step/warmup is exactly 1.0 at the boundary, so lr(warmup_steps) == peak.
  if (opt.warmup_steps > 0 && step <= opt.warmup_steps)
    return peak * (static_cast<double>(step) / static_cast<double>(opt.warmup_steps));
  const double floor = opt.min_lr_fraction * peak;
  if (step >= opt.total_steps) return floor;
  const std::uint64_t decay_span = opt.total_steps - opt.warmup_steps;
  if (decay_span == 0) return floor;
  const double u = static_cast<double>(step - opt.warmup_steps) /
                   static_cast<double>(decay_span);
  const double pi = 3.14159265358979323846;
  return floor + 0.5 * (peak - floor) * (1.0 + std::cos(pi * u));
}

namespace detail {

inline void sgd_update_span(double* w, const double* g, double* vel, std::size_t n,
                            double lr, double decay, double momentum) {
  for (std::size_t i = 0; i < n; ++i) {
    vel[i] = momentum * vel[i] + g[i];
    w[i] -= lr * (vel[i] + decay * w[i]);
  }
}

}  // namespace detail

// One optimizer step over every parameter tensor of the branch. Uses the
// state's current step counter for the schedule, then advances it.
inline void sgd_step(Branch& params, const BranchGrads& grads, OptimizerState& opt) {
  auto layers = detail::flat_layers(params);
  require(grads.weight.size() == layers.size() && grads.bias.size() == layers.size(),
          "ShapeMismatch", "gradients do not match parameter layout");

  if (opt.velocity_w.size() != layers.size()) {
    opt.velocity_w.clear();
    opt.velocity_b.clear();
    for (const auto* layer : layers) {
      opt.velocity_w.emplace_back(layer->weight.rows, layer->weight.cols);
      opt.velocity_b.emplace_back(layer->bias.size(), 0.0);
    }
  }

  const double lr = scheduled_lr(opt, opt.step);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    require(layers[l]->weight.same_shape(grads.weight[l]), "ShapeMismatch",
            "weight gradient shape mismatch at layer " + std::to_string(l));
    detail::sgd_update_span(layers[l]->weight.data.data(), grads.weight[l].data.data(),
                            opt.velocity_w[l].data.data(), layers[l]->weight.data.size(),
                            lr, opt.weight_decay, opt.momentum_sgd);
    require(layers[l]->bias.size() == grads.bias[l].size(), "ShapeMismatch",
            "bias gradient shape mismatch at layer " + std::to_string(l));
    detail::sgd_update_span(layers[l]->bias.data(), grads.bias[l].data(),
                            opt.velocity_b[l].data(), layers[l]->bias.size(), lr,
                            0.0, opt.momentum_sgd);
  }
  ++opt.step;
}

// Same update rule for a single free matrix (the prototype bank). Shares the
// schedule of `opt` but keeps its own velocity; no weight decay because the
// rows are renormalized after every step anyway.
struct MatrixOptimizer {
  Matrix velocity;

  void step(Matrix& param, const Matrix& grad, const OptimizerState& opt,
            std::uint64_t schedule_step) {
    require(param.same_shape(grad), "ShapeMismatch", "prototype gradient shape");
    if (!velocity.same_shape(param)) velocity = Matrix(param.rows, param.cols);
    const double lr = scheduled_lr(opt, schedule_step);
    detail::sgd_update_span(param.data.data(), grad.data.data(), velocity.data.data(),
                            param.data.size(), lr, 0.0, opt.momentum_sgd);
  }
};

}  // namespace resa
