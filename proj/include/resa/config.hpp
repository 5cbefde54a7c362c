#pragma once

// ---------------------------------------------------------------------------
// Flat-JSON configuration: every training and dataset field is addressable by
// a dotted key ("loss.tau", "data.n_classes", ...). A config file is a single
// flat JSON object of such keys; command-line overrides use the same names.
// Unknown keys are rejected with the offending key named. Serialization is
// canonical (keys sorted), which makes snapshots diffable and hashable.
// ---------------------------------------------------------------------------

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "resa/error.hpp"
#include "resa/train_config.hpp"

namespace resa {

using Json = nlohmann::json;

struct LabConfig {
  TrainConfig train;
  DatasetSpec data;
};

namespace detail {

inline std::vector<std::size_t> dims_from_json(const Json& v, const std::string& key) {
  std::vector<std::size_t> out;
  if (v.is_array()) {
    for (const auto& e : v) {
      require(e.is_number_unsigned() || (e.is_number_integer() && e.get<long long>() >= 0),
              "Config", key + ": dims must be non-negative integers");
      out.push_back(e.get<std::size_t>());
    }
  } else if (v.is_string()) {
    // "64,128,64" form, for command-line overrides.
    std::stringstream ss(v.get<std::string>());
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        out.push_back(static_cast<std::size_t>(std::stoull(item)));
      } catch (const std::exception&) {
        fail("Config", key + ": bad dimension list '" + v.get<std::string>() + "'");
      }
    }
  } else {
    fail("Config", key + ": expected an array of dims or a comma string");
  }
  require(!out.empty(), "Config", key + ": empty dimension list");
  return out;
}

template <typename T>
inline T number_from_json(const Json& v, const std::string& key) {
  if (v.is_number()) return v.get<T>();
  if (v.is_string()) {
    // Tolerate string-typed numbers so CLI overrides need no type plumbing.
    try {
      if constexpr (std::is_floating_point_v<T>)
        return static_cast<T>(std::stod(v.get<std::string>()));
      else
        return static_cast<T>(std::stoull(v.get<std::string>()));
    } catch (const std::exception&) {
      fail("Config", key + ": bad numeric value '" + v.get<std::string>() + "'");
    }
  }
  fail("Config", key + ": expected a number");
}

inline bool bool_from_json(const Json& v, const std::string& key) {
  if (v.is_boolean()) return v.get<bool>();
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
  }
  if (v.is_number_integer()) return v.get<long long>() != 0;
  fail("Config", key + ": expected a boolean");
}

}  // namespace detail

inline void apply_config_key(LabConfig& cfg, const std::string& key, const Json& v) {
  auto num_d = [&](double& target) { target = detail::number_from_json<double>(v, key); };
  auto num_z = [&](std::size_t& target) {
    target = detail::number_from_json<std::size_t>(v, key);
  };
  auto num_u64 = [&](std::uint64_t& target) {
    target = detail::number_from_json<std::uint64_t>(v, key);
  };
  auto flag = [&](bool& target) { target = detail::bool_from_json(v, key); };

  TrainConfig& t = cfg.train;
  DatasetSpec& d = cfg.data;

  if (key == "epochs") num_z(t.epochs);
  else if (key == "batch_size") num_z(t.batch_size);
  else if (key == "seed") num_u64(t.seed);
  else if (key == "eval_every") num_z(t.eval_every);
  else if (key == "eval_fraction") num_d(t.eval_fraction);
  else if (key == "use_momentum") flag(t.use_momentum);
  else if (key == "use_predictor") flag(t.net.use_predictor);
  else if (key == "momentum_coeff") num_d(t.momentum_coeff);
  else if (key == "assignment_source") {
    const std::string s = v.is_string() ? v.get<std::string>() : "";
    if (s == "momentum_encoder") t.assignment_source = AssignmentSource::MomentumEncoder;
    else if (s == "online_encoder") t.assignment_source = AssignmentSource::OnlineEncoder;
    else fail("Config", "assignment_source must be momentum_encoder or online_encoder");
  }
  else if (key == "weak_view_index") t.weak_view_index = detail::number_from_json<int>(v, key);
  else if (key == "weak_view_in_loss") flag(t.weak_view_in_loss);
  else if (key == "knn_k") num_z(t.knn_k);
  else if (key == "checkpoint_every") num_z(t.checkpoint_every);
  else if (key == "loss.variant") {
    const std::string s = v.is_string() ? v.get<std::string>() : "";
    if (s == "ReSA") t.loss.variant = LossVariant::ReSA;
    else if (s == "InfoNCE") t.loss.variant = LossVariant::InfoNCE;
    else if (s == "SwAV") t.loss.variant = LossVariant::SwAV;
    else fail("Config", "loss.variant must be ReSA, InfoNCE or SwAV");
  }
  else if (key == "loss.tau") num_d(t.loss.tau);
  else if (key == "sinkhorn.epsilon") num_d(t.sinkhorn.epsilon);
  else if (key == "sinkhorn.iterations") num_z(t.sinkhorn.iterations);
  else if (key == "optimizer.base_lr") num_d(t.optimizer.base_lr);
  else if (key == "optimizer.weight_decay") num_d(t.optimizer.weight_decay);
  else if (key == "optimizer.momentum") num_d(t.optimizer.momentum);
  else if (key == "optimizer.warmup_epochs") num_d(t.optimizer.warmup_epochs);
  else if (key == "optimizer.min_lr_fraction") num_d(t.optimizer.min_lr_fraction);
  else if (key == "net.encoder_dims") t.net.encoder_dims = detail::dims_from_json(v, key);
  else if (key == "net.projector_dims") t.net.projector_dims = detail::dims_from_json(v, key);
  else if (key == "net.predictor_dims") t.net.predictor_dims = detail::dims_from_json(v, key);
  else if (key == "augment.standard.noise_sigma") num_d(t.augment_standard.noise_sigma);
  else if (key == "augment.standard.mask_prob") num_d(t.augment_standard.mask_prob);
  else if (key == "augment.standard.scale_jitter") num_d(t.augment_standard.scale_jitter);
  else if (key == "augment.weak.noise_sigma") num_d(t.augment_weak.noise_sigma);
  else if (key == "swav.prototypes") num_z(t.swav_prototypes);
  else if (key == "data.n_classes") num_z(d.n_classes);
  else if (key == "data.samples_per_class") num_z(d.samples_per_class);
  else if (key == "data.ambient_dim") num_z(d.ambient_dim);
  else if (key == "data.latent_dim") num_z(d.latent_dim);
  else if (key == "data.class_separation") num_d(d.class_separation);
  else if (key == "data.warp") flag(d.warp);
  else if (key == "data.imbalance_factor") num_d(d.imbalance_factor);
  else fail("Config", "unknown key: " + key);
}

inline Json to_flat_json(const LabConfig& cfg) {
  const TrainConfig& t = cfg.train;
  const DatasetSpec& d = cfg.data;
  Json j;
  j["epochs"] = t.epochs;
  j["batch_size"] = t.batch_size;
  j["seed"] = t.seed;
  j["eval_every"] = t.eval_every;
  j["eval_fraction"] = t.eval_fraction;
  j["use_momentum"] = t.use_momentum;
  j["use_predictor"] = t.net.use_predictor;
  j["momentum_coeff"] = t.momentum_coeff;
  j["assignment_source"] = to_string(t.assignment_source);
  j["weak_view_index"] = t.weak_view_index;
  j["weak_view_in_loss"] = t.weak_view_in_loss;
  j["knn_k"] = t.knn_k;
  j["checkpoint_every"] = t.checkpoint_every;
  j["loss.variant"] = to_string(t.loss.variant);
  j["loss.tau"] = t.loss.tau;
  j["sinkhorn.epsilon"] = t.sinkhorn.epsilon;
  j["sinkhorn.iterations"] = t.sinkhorn.iterations;
  j["optimizer.base_lr"] = t.optimizer.base_lr;
  j["optimizer.weight_decay"] = t.optimizer.weight_decay;
  j["optimizer.momentum"] = t.optimizer.momentum;
  j["optimizer.warmup_epochs"] = t.optimizer.warmup_epochs;
  j["optimizer.min_lr_fraction"] = t.optimizer.min_lr_fraction;
  j["net.encoder_dims"] = t.net.encoder_dims;
  j["net.projector_dims"] = t.net.projector_dims;
  j["net.predictor_dims"] = t.net.predictor_dims;
  j["augment.standard.noise_sigma"] = t.augment_standard.noise_sigma;
  j["augment.standard.mask_prob"] = t.augment_standard.mask_prob;
  j["augment.standard.scale_jitter"] = t.augment_standard.scale_jitter;
  j["augment.weak.noise_sigma"] = t.augment_weak.noise_sigma;
  j["swav.prototypes"] = t.swav_prototypes;
  j["data.n_classes"] = d.n_classes;
  j["data.samples_per_class"] = d.samples_per_class;
  j["data.ambient_dim"] = d.ambient_dim;
  j["data.latent_dim"] = d.latent_dim;
  j["data.class_separation"] = d.class_separation;
  j["data.warp"] = d.warp;
  j["data.imbalance_factor"] = d.imbalance_factor;
  return j;
}

inline LabConfig config_from_flat_json(const Json& j) {
  require(j.is_object(), "Config", "config must be a flat JSON object");
  LabConfig cfg;
  for (auto it = j.begin(); it != j.end(); ++it)
    apply_config_key(cfg, it.key(), it.value());
  return cfg;
}

inline LabConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "Config", "cannot open config file: " + path);
  Json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    fail("Config", path + ": " + e.what());
  }
  return config_from_flat_json(j);
}

// Canonical dump: nlohmann objects iterate in sorted key order, so dump() is
// already canonical for a flat object.
inline std::string canonical_config_json(const LabConfig& cfg) {
  return to_flat_json(cfg).dump();
}

inline std::uint64_t config_hash(const LabConfig& cfg) {
  const std::string s = canonical_config_json(cfg);
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace resa
