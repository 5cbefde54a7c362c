#pragma once

// ---------------------------------------------------------------------------
// Training loop. Each step:
//
//   1. draw a batch B and build two augmented views (view 1 weak by default);
//   2. run the assignment encoder (momentum branch by default) on view 1,
//      detached: H -> L2 normalize -> cosine self-similarity -> Sinkhorn -> A;
//   3. run the online branch on both views, compute the loss on the two
//      embedding batches (self-assignment loss against A by default, or one
//      of the baselines), and backpropagate through the online branch only;
//   4. SGD step, then EMA update of the momentum branch.
//
// Labels never reach the loss; they are consumed exclusively by the
// per-epoch diagnostics, which run on a held-out slice of the data: encoding
// silhouette, k-means ARI, weighted k-NN accuracy, per-dimension embedding
// std (collapse sentinel) and the mean diagonal mass of A. Evaluations happen
// at epoch 0 (initialization), epoch 1, every eval_every epochs and at the
// final epoch.
//
// Checkpoints hold a JSON manifest plus the online parameters as 32-bit
// floats (the interchange payload) plus an exact 64-bit state section
// (online, momentum, optimizer velocities, prototype bank, RNG streams) so a
// resumed run reproduces the uninterrupted trajectory bit for bit.
// ---------------------------------------------------------------------------

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "resa/config.hpp"
#include "resa/datagen.hpp"
#include "resa/error.hpp"
#include "resa/io.hpp"
#include "resa/losses.hpp"
#include "resa/matrix.hpp"
#include "resa/metrics.hpp"
#include "resa/network.hpp"
#include "resa/numerics.hpp"
#include "resa/optimizer.hpp"
#include "resa/sinkhorn.hpp"
#include "resa/train_config.hpp"

namespace resa {

struct RunLog {
  std::vector<MetricsRecord> records;
  std::string config_json;               // canonical flat snapshot
  std::vector<double> epoch_seconds;     // wall clock, JSON only
};

struct TrainState {
  LabConfig cfg;
  NetworkPair net;
  OptimizerState opt;
  PrototypeBank bank;        // empty unless the prototype baseline is active
  MatrixOptimizer bank_opt;
  std::size_t next_epoch = 0;
  Rng batch_rng;
  Rng augment_rng;
  RunLog log;
};

struct TrainResult {
  NetworkPair net;
  RunLog log;
};

namespace detail {

struct DataSplit {
  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> eval_idx;
};

// Pure function of (seed, n): both init and resume recompute the same split.
inline DataSplit make_split(std::uint64_t seed, std::size_t n, double eval_fraction) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(detail::splitmix64(seed += 0x5eed5eedULL));
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(idx[i - 1], idx[j]);
  }
  std::size_t n_eval = static_cast<std::size_t>(std::llround(
      eval_fraction * static_cast<double>(n)));
  n_eval = std::max<std::size_t>(1, std::min(n_eval, n - 1));
  DataSplit split;
  split.eval_idx.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_eval));
  split.train_idx.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_eval), idx.end());
  return split;
}

inline Matrix gather_rows(const Matrix& x, const std::vector<std::size_t>& idx,
                          std::size_t lo, std::size_t hi) {
  Matrix out(hi - lo, x.cols);
  for (std::size_t i = lo; i < hi; ++i)
    std::memcpy(out.row(i - lo), x.row(idx[i]), x.cols * sizeof(double));
  return out;
}

inline std::vector<int> gather_labels(const std::vector<int>& y,
                                      const std::vector<std::size_t>& idx) {
  std::vector<int> out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = y[idx[i]];
  return out;
}

inline std::size_t count_distinct(const std::vector<int>& y) {
  std::size_t k = 0;
  compact_labels(y, &k);
  return k;
}

}  // namespace detail

inline TrainState init_train_state(const LabConfig& cfg) {
  cfg.train.validate();
  TrainState st;
  st.cfg = cfg;
  Rng master(cfg.train.seed);
  Rng init_rng = master.split(1);
  Rng bank_rng = master.split(2);
  st.batch_rng = master.split(3);
  st.augment_rng = master.split(4);
  NetworkShape shape = cfg.train.net;
  st.net = make_network_pair(shape, cfg.train.momentum_coeff, init_rng);
  if (cfg.train.loss.variant == LossVariant::SwAV)
    st.bank = PrototypeBank::random(cfg.train.swav_prototypes,
                                    shape.use_predictor ? shape.predictor_dims.back()
                                                        : shape.projector_dims.back(),
                                    bank_rng);
  st.log.config_json = canonical_config_json(cfg);
  return st;
}

namespace detail {

// Assignment pipeline on a detached encoding batch. A non-finite encoding
// (or one whose norm overflows) means the parameters have blown up, which is
// the same pathology as a non-finite loss and is reported as such.
inline AssignmentMatrix self_assignment_of(const Branch& branch, const Matrix& view,
                                           const SinkhornConfig& scfg,
                                           const std::string& context) {
  const Matrix h = forward(branch, view, /*want_grad=*/false).encoding;
  if (!h.all_finite())
    fail("NonFiniteLoss", "assignment encoding is non-finite at " + context);
  for (std::size_t i = 0; i < h.rows; ++i)
    if (!std::isfinite(row_norm(h, i)))
      fail("NonFiniteLoss", "assignment encoding norm overflow at " + context);
  return sinkhorn_self_assignment(cosine_self_similarity(l2_normalize_rows(h)), scfg);
}

inline const Branch& assignment_branch(const TrainState& st) {
  const bool use_momentum =
      st.cfg.train.use_momentum &&
      st.cfg.train.assignment_source == AssignmentSource::MomentumEncoder;
  return use_momentum ? st.net.momentum : st.net.online;
}

struct EpochStats {
  double loss_sum = 0.0;
  double diag_sum = 0.0;
  double min_std = std::numeric_limits<double>::infinity();
  std::size_t steps = 0;
};

inline MetricsRecord evaluate(const TrainState& st, const Matrix& x,
                              const std::vector<int>& y, const DataSplit& split,
                              std::size_t epoch, const EpochStats* stats) {
  const LabConfig& cfg = st.cfg;
  const Matrix x_eval = gather_rows(x, split.eval_idx, 0, split.eval_idx.size());
  const std::vector<int> y_eval = gather_labels(y, split.eval_idx);

  const ForwardResult fwd = forward(st.net.online, x_eval, /*want_grad=*/false);
  const Matrix& h = fwd.encoding;

  MetricsRecord rec;
  rec.epoch = epoch;

  const SilhouetteResult sil = silhouette(h, y_eval);
  rec.sc_mean = sil.mean;
  rec.sc_std = sil.stddev;

  std::uint64_t eval_seed = st.cfg.train.seed ^ (0x9e3779b97f4a7c15ULL * (epoch + 1));
  Rng eval_rng(detail::splitmix64(eval_seed));
  const std::size_t k = count_distinct(y_eval);
  if (k >= 2 && k <= h.rows) {
    // Cluster on the unit sphere: every consumer of encodings in this system
    // (self-assignment, k-NN) reads direction, not magnitude.
    const KmeansResult km = kmeans(l2_normalize_rows(h), k, eval_rng);
    rec.ari = adjusted_rand_index(y_eval, km.labels);
  } else {
    rec.ari = 0.0;
  }

  // Deterministic 80/20 split of the eval slice for the k-NN readout.
  const std::size_t n_eval = split.eval_idx.size();
  const std::size_t n_fit = std::max<std::size_t>(1, (n_eval * 4) / 5);
  if (n_fit < n_eval) {
    const Matrix hn = l2_normalize_rows(h);
    Matrix fit_x(n_fit, h.cols), test_x(n_eval - n_fit, h.cols);
    std::vector<int> fit_y(n_fit), test_y(n_eval - n_fit);
    for (std::size_t i = 0; i < n_eval; ++i) {
      if (i < n_fit) {
        std::memcpy(fit_x.row(i), hn.row(i), h.cols * sizeof(double));
        fit_y[i] = y_eval[i];
      } else {
        std::memcpy(test_x.row(i - n_fit), hn.row(i), h.cols * sizeof(double));
        test_y[i - n_fit] = y_eval[i];
      }
    }
    KnnConfig knn_cfg;
    knn_cfg.k = std::min(cfg.train.knn_k, n_fit);
    rec.knn_accuracy = accuracy(knn_classify(fit_x, fit_y, test_x, knn_cfg), test_y);
  } else {
    rec.knn_accuracy = 0.0;
  }

  if (stats && stats->steps > 0) {
    rec.loss = stats->loss_sum / static_cast<double>(stats->steps);
    rec.assignment_diag_mass = stats->diag_sum / static_cast<double>(stats->steps);
    rec.collapse_min_std = stats->min_std;
  } else {
    // Initialization record: probe one batch-sized slice of the eval set.
    const std::size_t probe = std::min(cfg.train.batch_size, x_eval.rows);
    Matrix probe_x(probe, x_eval.cols);
    std::memcpy(probe_x.data.data(), x_eval.data.data(),
                probe * x_eval.cols * sizeof(double));
    const AssignmentMatrix a = self_assignment_of(assignment_branch(st), probe_x,
                                                  cfg.train.sinkhorn,
                                                  "initialization probe");
    rec.assignment_diag_mass = mean_diagonal(a.values);
    rec.collapse_min_std = min_dimension_std(fwd.embedding);
  }
  rec.lr = scheduled_lr(st.opt, st.opt.step);
  return rec;
}

}  // namespace detail

// Runs epochs [state.next_epoch, until_epoch). The state owns every piece of
// mutable training context, so stopping and restarting at an epoch boundary
// is indistinguishable from running straight through.
inline void train_epochs(TrainState& st, const Matrix& x, const std::vector<int>& y,
                         std::size_t until_epoch) {
  const TrainConfig& cfg = st.cfg.train;
  cfg.validate();
  require(y.size() == x.rows, "LengthMismatch", "labels do not match data rows");
  require(x.cols == cfg.net.encoder_dims.front(), "ShapeMismatch",
          "data dim " + std::to_string(x.cols) + " vs encoder input " +
              std::to_string(cfg.net.encoder_dims.front()));

  const detail::DataSplit split =
      detail::make_split(cfg.seed, x.rows, cfg.eval_fraction);
  require(split.train_idx.size() >= cfg.batch_size, "BatchTooSmall",
          "training pool has " + std::to_string(split.train_idx.size()) +
              " rows for batch size " + std::to_string(cfg.batch_size));

  const std::size_t steps_per_epoch = split.train_idx.size() / cfg.batch_size;
  st.opt.learning_rate_peak = cfg.peak_lr();
  st.opt.weight_decay = cfg.optimizer.weight_decay;
  st.opt.momentum_sgd = cfg.optimizer.momentum;
  st.opt.min_lr_fraction = cfg.optimizer.min_lr_fraction;
  st.opt.warmup_steps = static_cast<std::uint64_t>(
      std::llround(cfg.optimizer.warmup_epochs * static_cast<double>(steps_per_epoch)));
  st.opt.total_steps =
      std::max<std::uint64_t>(1, cfg.epochs * static_cast<std::uint64_t>(steps_per_epoch));

  const bool is_resa = cfg.loss.variant == LossVariant::ReSA;
  const AugmentSpec& view1_spec =
      (is_resa && cfg.weak_view_index == 1) ? cfg.augment_weak : cfg.augment_standard;
  const AugmentSpec& view2_spec =
      (is_resa && cfg.weak_view_index == 2) ? cfg.augment_weak : cfg.augment_standard;

  // A zero-epoch run keeps an empty log; any real run starts with an
  // initialization record at epoch 0.
  if (st.next_epoch == 0 && st.log.records.empty() && cfg.epochs > 0)
    st.log.records.push_back(detail::evaluate(st, x, y, split, 0, nullptr));

  for (std::size_t epoch = st.next_epoch; epoch < until_epoch; ++epoch) {
    const auto epoch_start = std::chrono::steady_clock::now();

    // Fresh per-epoch shuffle of the training pool, so the batch order is a
    // pure function of (split, batch_rng state) and a resumed run sees the
    // same batches as an uninterrupted one. Ragged tail dropped: every step
    // sees exactly batch_size samples.
    std::vector<std::size_t> order = split.train_idx;
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(st.batch_rng.below(i));
      std::swap(order[i - 1], order[j]);
    }

    detail::EpochStats stats;
    for (std::size_t step = 0; step < steps_per_epoch; ++step) {
      const std::size_t lo = step * cfg.batch_size;
      const Matrix batch = detail::gather_rows(x, order, lo, lo + cfg.batch_size);

      Matrix assign_view;
      Matrix view1, view2;
      if (is_resa && !cfg.weak_view_in_loss) {
        assign_view = augment(batch, cfg.augment_weak, st.augment_rng);
        view1 = augment(batch, cfg.augment_standard, st.augment_rng);
        view2 = augment(batch, cfg.augment_standard, st.augment_rng);
      } else {
        view1 = augment(batch, view1_spec, st.augment_rng);
        view2 = augment(batch, view2_spec, st.augment_rng);
        assign_view = view1;
      }

      const AssignmentMatrix a = detail::self_assignment_of(
          detail::assignment_branch(st), assign_view, cfg.sinkhorn,
          "step " + std::to_string(st.opt.step));

      ForwardResult f1 = forward(st.net.online, view1, /*want_grad=*/true);
      ForwardResult f2 = forward(st.net.online, view2, /*want_grad=*/true);

      LossResult loss;
      switch (cfg.loss.variant) {
        case LossVariant::ReSA:
          loss = resa_loss(f1.embedding, f2.embedding, a.values, cfg.loss);
          break;
        case LossVariant::InfoNCE:
          loss = infonce_loss(f1.embedding, f2.embedding, cfg.loss);
          break;
        case LossVariant::SwAV:
          loss = swav_loss(f1.embedding, f2.embedding, st.bank, cfg.loss, cfg.sinkhorn);
          break;
      }
      if (!std::isfinite(loss.value))
        fail("NonFiniteLoss",
             "loss " + std::to_string(loss.value) + " at step " +
                 std::to_string(st.opt.step) + " (epoch " + std::to_string(epoch + 1) +
                 "); embedding min std " +
                 std::to_string(min_dimension_std(f1.embedding)));

      BranchGrads grads = backward(st.net.online, f1.tape, loss.grad_z);
      grads.accumulate(backward(st.net.online, f2.tape, loss.grad_zp));

      const std::uint64_t schedule_step = st.opt.step;
      sgd_step(st.net.online, grads, st.opt);
      if (cfg.loss.variant == LossVariant::SwAV) {
        st.bank_opt.step(st.bank.c, loss.grad_prototypes, st.opt, schedule_step);
        st.bank.renormalize();
      }
      if (cfg.use_momentum) ema_update(st.net);

      stats.loss_sum += loss.value;
      stats.diag_sum += mean_diagonal(a.values);
      stats.min_std = std::min(stats.min_std, min_dimension_std(f1.embedding));
      ++stats.steps;
    }

    const std::size_t done = epoch + 1;
    st.log.epoch_seconds.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_start)
            .count());
    if (done == 1 || done % cfg.eval_every == 0 || done == cfg.epochs)
      st.log.records.push_back(detail::evaluate(st, x, y, split, done, &stats));
    st.next_epoch = done;
  }
}

inline TrainResult train(const Matrix& x, const std::vector<int>& y,
                         const LabConfig& cfg) {
  TrainState st = init_train_state(cfg);
  train_epochs(st, x, y, cfg.train.epochs);
  return TrainResult{std::move(st.net), std::move(st.log)};
}

// Baseline entry point: identical loop with the loss swapped; rejects the
// primary variant so comparisons stay explicit.
inline TrainResult train_baseline(const Matrix& x, const std::vector<int>& y,
                                  const LabConfig& cfg) {
  require(cfg.train.loss.variant != LossVariant::ReSA, "Config",
          "train_baseline expects an InfoNCE or SwAV config");
  return train(x, y, cfg);
}

// --------------------------------------------------------------------------
// RunLog serialization.
// --------------------------------------------------------------------------

namespace detail {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

inline std::string runlog_to_csv(const RunLog& log) {
  std::string out = "epoch,loss,sc_mean,sc_std,ari,knn_acc,collapse_min_std,diag_mass,lr\n";
  for (const MetricsRecord& r : log.records) {
    out += std::to_string(r.epoch);
    for (double v : {r.loss, r.sc_mean, r.sc_std, r.ari, r.knn_accuracy,
                     r.collapse_min_std, r.assignment_diag_mass, r.lr}) {
      out += ',';
      out += detail::format_double(v);
    }
    out += '\n';
  }
  return out;
}

inline Json record_to_json(const MetricsRecord& r) {
  Json j;
  j["epoch"] = r.epoch;
  j["loss"] = r.loss;
  j["sc_mean"] = r.sc_mean;
  j["sc_std"] = r.sc_std;
  j["ari"] = r.ari;
  j["knn_acc"] = r.knn_accuracy;
  if (r.linear_accuracy) j["linear_acc"] = *r.linear_accuracy;
  j["collapse_min_std"] = r.collapse_min_std;
  j["diag_mass"] = r.assignment_diag_mass;
  j["lr"] = r.lr;
  return j;
}

inline MetricsRecord record_from_json(const Json& j) {
  MetricsRecord r;
  auto num = [&](const char* key) {
    return j.contains(key) && j[key].is_number()
               ? j[key].get<double>()
               : std::numeric_limits<double>::quiet_NaN();
  };
  r.epoch = j.at("epoch").get<std::size_t>();
  r.loss = num("loss");
  r.sc_mean = num("sc_mean");
  r.sc_std = num("sc_std");
  r.ari = num("ari");
  r.knn_accuracy = num("knn_acc");
  if (j.contains("linear_acc") && j["linear_acc"].is_number())
    r.linear_accuracy = j["linear_acc"].get<double>();
  r.collapse_min_std = num("collapse_min_std");
  r.assignment_diag_mass = num("diag_mass");
  r.lr = num("lr");
  return r;
}

inline std::string runlog_to_json(const RunLog& log) {
  Json j;
  j["config"] = Json::parse(log.config_json);
  Json records = Json::array();
  for (const MetricsRecord& r : log.records) records.push_back(record_to_json(r));
  j["records"] = std::move(records);
  j["epoch_seconds"] = log.epoch_seconds;
  return j.dump(2);
}

// --------------------------------------------------------------------------
// Checkpointing. Layout:
//   "RSCK" | u32 version | u64 manifest length | manifest JSON
//   | f32 online parameters (declaration order)
//   | f64 exact state (online, momentum, velocities, bank, RNG, counters)
// --------------------------------------------------------------------------

namespace detail {

inline void collect_params(const Branch& b, std::vector<const LinearLayer*>& out) {
  for (const LinearLayer* l : flat_layers(b)) out.push_back(l);
}

inline void write_f64(std::ostream& os, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline double read_f64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

// Walks every 64-bit value that defines the training trajectory, in a fixed
// order shared by save and load.
template <typename State, typename Fn>
inline void exact_state_visit(State& st, Fn&& visit) {
  auto walk_branch = [&](auto& b) {
    for (auto* l : flat_layers(b)) {
      for (auto& v : l->weight.data) visit(v);
      for (auto& v : l->bias) visit(v);
    }
  };
  walk_branch(st.net.online);
  walk_branch(st.net.momentum);
  for (auto& m : st.opt.velocity_w)
    for (auto& v : m.data) visit(v);
  for (auto& vec : st.opt.velocity_b)
    for (auto& v : vec) visit(v);
  for (auto& v : st.bank.c.data) visit(v);
  for (auto& v : st.bank_opt.velocity.data) visit(v);
}

}  // namespace detail

inline void save_checkpoint(const TrainState& st, const std::string& path) {
  Json manifest;
  manifest["format"] = "RSCK";
  manifest["version"] = 1;
  manifest["config"] = Json::parse(canonical_config_json(st.cfg));
  manifest["config_hash"] = config_hash(st.cfg);
  manifest["epoch"] = st.next_epoch;
  manifest["step"] = st.opt.step;
  manifest["arch"] = {{"encoder_dims", st.cfg.train.net.encoder_dims},
                      {"projector_dims", st.cfg.train.net.projector_dims},
                      {"predictor_dims", st.cfg.train.net.predictor_dims},
                      {"use_predictor", st.cfg.train.net.use_predictor}};
  manifest["rng"] = {{"batch", st.batch_rng.state()},
                     {"augment", st.augment_rng.state()}};
  manifest["velocity_layers"] = st.opt.velocity_w.size();
  manifest["bank_rows"] = st.bank.c.rows;
  manifest["bank_cols"] = st.bank.c.cols;
  manifest["bank_velocity"] = st.bank_opt.velocity.rows > 0;
  Json records = Json::array();
  for (const MetricsRecord& r : st.log.records) records.push_back(record_to_json(r));
  manifest["records"] = std::move(records);
  manifest["epoch_seconds"] = st.log.epoch_seconds;

  std::vector<const LinearLayer*> params;
  detail::collect_params(st.net.online, params);
  std::size_t f32_count = 0;
  for (const LinearLayer* l : params) f32_count += l->weight.data.size() + l->bias.size();
  manifest["param_count"] = f32_count;

  std::ofstream out(path, std::ios::binary);
  require(out.good(), "CorruptCheckpoint", "cannot open for writing: " + path);
  const std::string mjson = manifest.dump();
  out.write("RSCK", 4);
  detail::put_u32_le(out, 1);
  const std::uint64_t mlen = mjson.size();
  for (int i = 0; i < 8; ++i)
    out.put(static_cast<char>((mlen >> (8 * i)) & 0xff));
  out.write(mjson.data(), static_cast<std::streamsize>(mjson.size()));

  // 32-bit interchange payload: online parameters in declaration order.
  for (const LinearLayer* l : params) {
    for (double v : l->weight.data) detail::put_f32_le(out, static_cast<float>(v));
    for (double v : l->bias) detail::put_f32_le(out, static_cast<float>(v));
  }

  // Exact 64-bit state.
  detail::exact_state_visit(st, [&](const double& v) { detail::write_f64(out, v); });
  require(out.good(), "CorruptCheckpoint", "write failed: " + path);
}

inline TrainState load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "CorruptCheckpoint", "cannot open: " + path);
  char magic[4] = {0, 0, 0, 0};
  in.read(magic, 4);
  require(in.good() && std::memcmp(magic, "RSCK", 4) == 0, "CorruptCheckpoint",
          path + ": bad magic");
  const std::uint32_t version = detail::get_u32_le(in);
  require(version == 1, "CorruptCheckpoint",
          path + ": unsupported version " + std::to_string(version));
  std::uint64_t mlen = 0;
  for (int i = 0; i < 8; ++i) {
    const int c = in.get();
    require(c != EOF, "CorruptCheckpoint", path + ": truncated header");
    mlen |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  std::string mjson(mlen, '\0');
  in.read(mjson.data(), static_cast<std::streamsize>(mlen));
  require(in.good(), "CorruptCheckpoint", path + ": truncated manifest");

  Json manifest;
  try {
    manifest = Json::parse(mjson);
  } catch (const std::exception& e) {
    fail("CorruptCheckpoint", path + ": manifest parse error: " + e.what());
  }

  TrainState st;
  try {
    st.cfg = config_from_flat_json(manifest.at("config"));
    st.next_epoch = manifest.at("epoch").get<std::size_t>();
    for (const Json& rj : manifest.at("records"))
      st.log.records.push_back(record_from_json(rj));
    if (manifest.contains("epoch_seconds"))
      st.log.epoch_seconds = manifest["epoch_seconds"].get<std::vector<double>>();
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    fail("CorruptCheckpoint", path + ": manifest field error: " + e.what());
  }
  st.log.config_json = canonical_config_json(st.cfg);

  // Rebuild shapes, then overwrite every exact value from the f64 section.
  Rng scratch(0);
  st.net = make_network_pair(st.cfg.train.net, st.cfg.train.momentum_coeff, scratch);
  const std::size_t velocity_layers =
      manifest.value("velocity_layers", static_cast<std::size_t>(0));
  if (velocity_layers > 0) {
    auto layers = detail::flat_layers(st.net.online);
    require(velocity_layers == layers.size(), "CorruptCheckpoint",
            path + ": velocity layout mismatch");
    for (const LinearLayer* l : layers) {
      st.opt.velocity_w.emplace_back(l->weight.rows, l->weight.cols);
      st.opt.velocity_b.emplace_back(l->bias.size(), 0.0);
    }
  }
  const std::size_t bank_rows = manifest.value("bank_rows", static_cast<std::size_t>(0));
  const std::size_t bank_cols = manifest.value("bank_cols", static_cast<std::size_t>(0));
  st.bank.c = Matrix(bank_rows, bank_cols);
  if (manifest.value("bank_velocity", false))
    st.bank_opt.velocity = Matrix(bank_rows, bank_cols);

  st.opt.step = manifest.at("step").get<std::uint64_t>();

  try {
    std::array<std::uint64_t, 4> s{};
    manifest.at("rng").at("batch").get_to(s);
    st.batch_rng.set_state(s);
    manifest.at("rng").at("augment").get_to(s);
    st.augment_rng.set_state(s);
  } catch (const std::exception& e) {
    fail("CorruptCheckpoint", path + ": rng state error: " + e.what());
  }

  // Skip the f32 interchange payload.
  const std::uint64_t f32_count = manifest.at("param_count").get<std::uint64_t>();
  in.seekg(static_cast<std::streamoff>(f32_count * 4), std::ios::cur);
  require(in.good(), "CorruptCheckpoint", path + ": truncated parameter payload");

  bool short_read = false;
  detail::exact_state_visit(st, [&](double& v) {
    v = detail::read_f64(in);
    if (!in.good()) short_read = true;
  });
  require(!short_read, "CorruptCheckpoint", path + ": truncated exact state");
  return st;
}

// Raised when a resumed run is driven with a different configuration.
inline void ensure_config_matches(const LabConfig& requested, const LabConfig& stored) {
  if (canonical_config_json(requested) != canonical_config_json(stored))
    fail("ConfigMismatch",
         "checkpoint was produced with a different configuration");
}

}  // namespace resa
