#pragma once

// ---------------------------------------------------------------------------
// Run configuration. Defaults are the desk-scale reference setup: batch 256,
// temperature 0.4, Sinkhorn eps 0.05 with 3 iterations, SGD with two warmup
// epochs and a cosine schedule floored at 0.1x the peak rate, momentum network
// on, predictor off. The peak learning rate scales linearly with batch size
// (base_lr * batch / 256).
// ---------------------------------------------------------------------------

#include <cstddef>
#include <cstdint>
#include <string>

#include "resa/datagen.hpp"
#include "resa/error.hpp"
#include "resa/losses.hpp"
#include "resa/network.hpp"
#include "resa/sinkhorn.hpp"

namespace resa {

enum class AssignmentSource { MomentumEncoder, OnlineEncoder };

inline const char* to_string(AssignmentSource s) {
  return s == AssignmentSource::MomentumEncoder ? "momentum_encoder" : "online_encoder";
}

struct OptimizerConfig {
  double base_lr = 0.3;
  double weight_decay = 1e-4;
  double momentum = 0.9;
  double warmup_epochs = 2.0;
  double min_lr_fraction = 0.1;
};

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 256;
  std::uint64_t seed = 7;
  std::size_t eval_every = 10;
  double eval_fraction = 0.25;
  bool use_momentum = true;
  double momentum_coeff = 0.99;
  AssignmentSource assignment_source = AssignmentSource::MomentumEncoder;
  // The assignment always comes from view 1; weak_view_index decides whether
  // view 1 (default) or view 2 carries the weak augmentation.
  int weak_view_index = 1;
  // When false, the weak view feeds the assignment only and the loss compares
  // two standard views.
  bool weak_view_in_loss = true;
  std::size_t knn_k = 5;
  std::size_t checkpoint_every = 0;  // epochs; 0 disables periodic saves

  LossConfig loss;
  SinkhornConfig sinkhorn;
  OptimizerConfig optimizer;
  NetworkShape net;
  AugmentSpec augment_standard = AugmentSpec::standard();
  AugmentSpec augment_weak = AugmentSpec::weak_view();
  std::size_t swav_prototypes = 16;

  double peak_lr() const {
    return optimizer.base_lr * static_cast<double>(batch_size) / 256.0;
  }

  void validate() const {
    require(batch_size >= 2, "BatchTooSmall",
            "self-assignment needs a batch of at least 2, got " +
                std::to_string(batch_size));
    require(eval_every >= 1, "Config", "eval_every must be >= 1");
    require(eval_fraction > 0.0 && eval_fraction < 1.0, "Config",
            "eval_fraction must lie in (0, 1)");
    require(momentum_coeff >= 0.0 && momentum_coeff <= 1.0, "CoefficientOutOfRange",
            "momentum_coeff must lie in [0, 1]");
    require(weak_view_index == 1 || weak_view_index == 2, "Config",
            "weak_view_index must be 1 or 2");
    if (!weak_view_in_loss)
      require(weak_view_index == 1, "Config",
              "weak_view_in_loss=false pins the weak view to the assignment view");
    require(loss.tau > 0.0, "NonPositiveTau", "loss.tau must be positive");
    require(sinkhorn.epsilon > 0.0, "NonPositiveEpsilon",
            "sinkhorn.epsilon must be positive");
    require(sinkhorn.iterations >= 1, "Config", "sinkhorn.iterations must be >= 1");
    require(optimizer.base_lr > 0.0, "Config", "optimizer.base_lr must be positive");
    require(optimizer.weight_decay >= 0.0, "Config", "weight decay must be >= 0");
    require(optimizer.warmup_epochs >= 0.0, "Config", "warmup must be >= 0");
    require(optimizer.min_lr_fraction >= 0.0 && optimizer.min_lr_fraction <= 1.0,
            "Config", "min_lr_fraction must lie in [0, 1]");
    require(swav_prototypes >= 2, "TooFewPrototypes",
            "swav.prototypes must be >= 2");
    require(knn_k >= 1, "Config", "knn_k must be >= 1");
    net.validate();
    augment_standard.validate();
    augment_weak.validate();
  }
};

}  // namespace resa
