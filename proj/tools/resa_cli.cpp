// ---------------------------------------------------------------------------
// resa: command-line front end for the self-assignment laboratory.
//
//   train      generate a synthetic dataset, run the training loop, write the
//              run log (CSV + JSON) and checkpoints to --out
//   metrics    clustering diagnostics (silhouette, ARI, k-NN, optional linear
//              probe) for a feature matrix + label file, JSON on stdout
//   sinkhorn   one-shot balanced assignment of a similarity matrix file
//   gradcheck  analytic-vs-finite-difference gradient suites
//   compare    train the self-assignment objective and both baselines on
//              identical data and seed, emit a side-by-side CSV
//
// Configuration is a flat JSON object of dotted keys; any key can also be
// passed as a --key value flag, and flags win over the file. Errors print as
// "ERROR:<kind>: message" on stderr; exit codes: 0 success, 2 non-finite
// loss, 1 anything else.
// ---------------------------------------------------------------------------

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "resa/config.hpp"
#include "resa/datagen.hpp"
#include "resa/gradcheck.hpp"
#include "resa/io.hpp"
#include "resa/metrics.hpp"
#include "resa/sinkhorn.hpp"
#include "resa/trainer.hpp"

namespace {

constexpr const char* kConfigKeys[] = {
    "epochs", "batch_size", "seed", "eval_every", "eval_fraction",
    "use_momentum", "use_predictor", "momentum_coeff", "assignment_source",
    "weak_view_index", "weak_view_in_loss", "knn_k", "checkpoint_every",
    "loss.variant", "loss.tau",
    "sinkhorn.epsilon", "sinkhorn.iterations",
    "optimizer.base_lr", "optimizer.weight_decay", "optimizer.momentum",
    "optimizer.warmup_epochs", "optimizer.min_lr_fraction",
    "net.encoder_dims", "net.projector_dims", "net.predictor_dims",
    "augment.standard.noise_sigma", "augment.standard.mask_prob",
    "augment.standard.scale_jitter", "augment.weak.noise_sigma",
    "swav.prototypes",
    "data.n_classes", "data.samples_per_class", "data.ambient_dim",
    "data.latent_dim", "data.class_separation", "data.warp",
    "data.imbalance_factor",
};

// Registers one string option per config key on a subcommand; values land in
// `overrides` only when the flag is actually passed. Repeated flags take the
// last value.
void add_config_overrides(CLI::App* cmd, std::map<std::string, std::string>& overrides) {
  for (const char* key : kConfigKeys) {
    cmd->add_option_function<std::string>(
           std::string("--") + key,
           [&overrides, key](const std::string& v) { overrides[key] = v; },
           std::string("override config key ") + key)
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  }
}

resa::LabConfig resolve_config(const std::string& config_path,
                               const std::map<std::string, std::string>& overrides) {
  resa::LabConfig cfg;
  if (!config_path.empty()) cfg = resa::load_config_file(config_path);
  for (const auto& [key, value] : overrides)
    resa::apply_config_key(cfg, key, resa::Json(value));
  cfg.train.validate();
  cfg.data.validate();
  return cfg;
}

resa::Dataset make_dataset(const resa::LabConfig& cfg) {
  std::uint64_t s = cfg.train.seed ^ 0xda7a5e7ULL;
  resa::Rng rng(resa::detail::splitmix64(s));
  return resa::generate(cfg.data, rng);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  resa::require(out.good(), "MalformedFile", "cannot open for writing: " + path);
  out << text;
  resa::require(out.good(), "MalformedFile", "write failed: " + path);
}

resa::MetricsRecord diagnose_features(const resa::Matrix& x,
                                      const std::vector<int>& labels,
                                      std::uint64_t seed, std::size_t knn_k,
                                      bool with_linear_probe) {
  resa::require(labels.size() == x.rows, "LengthMismatch",
                "labels do not match feature rows");
  resa::MetricsRecord rec;
  const resa::SilhouetteResult sil = resa::silhouette(x, labels);
  rec.sc_mean = sil.mean;
  rec.sc_std = sil.stddev;

  std::size_t k = 0;
  resa::detail::compact_labels(labels, &k);
  resa::Rng km_rng(resa::detail::splitmix64(seed ^= 0x5eedULL));
  if (k >= 2 && k <= x.rows)
    rec.ari = resa::adjusted_rand_index(labels,
                                        resa::kmeans(x, k, km_rng).labels);

  const std::size_t n = x.rows;
  const std::size_t n_fit = std::max<std::size_t>(1, (n * 4) / 5);
  if (n_fit < n) {
    const resa::Matrix xn = resa::l2_normalize_rows(x);
    resa::Matrix fit_x(n_fit, x.cols), test_x(n - n_fit, x.cols);
    std::vector<int> fit_y(n_fit), test_y(n - n_fit);
    for (std::size_t i = 0; i < n; ++i) {
      if (i < n_fit) {
        std::copy(xn.row(i), xn.row(i) + x.cols, fit_x.row(i));
        fit_y[i] = labels[i];
      } else {
        std::copy(xn.row(i), xn.row(i) + x.cols, test_x.row(i - n_fit));
        test_y[i - n_fit] = labels[i];
      }
    }
    resa::KnnConfig knn_cfg;
    knn_cfg.k = std::min(knn_k, n_fit);
    rec.knn_accuracy =
        resa::accuracy(resa::knn_classify(fit_x, fit_y, test_x, knn_cfg), test_y);
    if (with_linear_probe) {
      resa::Rng probe_rng(seed);
      rec.linear_accuracy = resa::linear_probe(fit_x, fit_y, test_x, test_y, probe_rng);
    }
  }

  rec.collapse_min_std = resa::min_dimension_std(x);

  // Self-assignment sharpness of (a slice of) the features themselves.
  const std::size_t probe = std::min<std::size_t>(n, 1024);
  resa::Matrix slice(probe, x.cols);
  std::copy(x.data.begin(),
            x.data.begin() + static_cast<std::ptrdiff_t>(probe * x.cols),
            slice.data.begin());
  const resa::AssignmentMatrix a = resa::sinkhorn_self_assignment(
      resa::cosine_self_similarity(resa::l2_normalize_rows(slice)));
  rec.assignment_diag_mass = resa::mean_diagonal(a.values);
  return rec;
}

int cmd_train(const std::string& config_path,
              const std::map<std::string, std::string>& overrides,
              const std::string& out_dir, const std::string& resume_path) {
  resa::LabConfig cfg = resolve_config(config_path, overrides);
  std::filesystem::create_directories(out_dir);

  const resa::Dataset ds = make_dataset(cfg);
  resa::TrainState state;
  if (!resume_path.empty()) {
    state = resa::load_checkpoint(resume_path);
    resa::ensure_config_matches(cfg, state.cfg);
  } else {
    state = resa::init_train_state(cfg);
  }

  const std::size_t epochs = cfg.train.epochs;
  const std::size_t every = cfg.train.checkpoint_every;
  std::size_t epoch = state.next_epoch;
  while (epoch < epochs) {
    const std::size_t next =
        every > 0 ? std::min(epochs, ((epoch / every) + 1) * every) : epochs;
    resa::train_epochs(state, ds.x, ds.labels, next);
    epoch = state.next_epoch;
    if (every > 0 && epoch < epochs) {
      char name[64];
      std::snprintf(name, sizeof(name), "checkpoint_epoch%04zu.rsck", epoch);
      resa::save_checkpoint(state, (std::filesystem::path(out_dir) / name).string());
    }
  }
  resa::save_checkpoint(state,
                        (std::filesystem::path(out_dir) / "checkpoint_final.rsck").string());
  write_text((std::filesystem::path(out_dir) / "runlog.csv").string(),
             resa::runlog_to_csv(state.log));
  write_text((std::filesystem::path(out_dir) / "runlog.json").string(),
             resa::runlog_to_json(state.log));

  if (!state.log.records.empty()) {
    const resa::MetricsRecord& last = state.log.records.back();
    std::printf("trained %zu epochs: loss=%.6f ari=%.4f knn=%.4f sc_mean=%.4f\n",
                state.next_epoch, last.loss, last.ari, last.knn_accuracy, last.sc_mean);
  }
  return 0;
}

int cmd_metrics(const std::string& features_path, const std::string& labels_path,
                std::uint64_t seed, std::size_t knn_k, bool with_linear_probe) {
  const resa::Matrix x =
      resa::load_matrix(features_path, resa::format_from_path(features_path));
  const std::vector<int> labels = resa::load_labels(labels_path);
  const resa::MetricsRecord rec =
      diagnose_features(x, labels, seed, knn_k, with_linear_probe);
  std::cout << resa::record_to_json(rec).dump(2) << "\n";
  return 0;
}

int cmd_sinkhorn(const std::string& matrix_path, const std::string& out_path,
                 double epsilon, std::size_t iterations) {
  const resa::Matrix s =
      resa::load_matrix(matrix_path, resa::format_from_path(matrix_path));
  resa::SinkhornConfig cfg;
  cfg.epsilon = epsilon;
  cfg.iterations = iterations;
  const resa::AssignmentMatrix a = resa::sinkhorn_self_assignment(s, cfg);
  if (!out_path.empty())
    resa::save_matrix(a.values, out_path, resa::format_from_path(out_path));
  resa::Json report;
  report["rows"] = a.values.rows;
  report["epsilon"] = cfg.epsilon;
  report["iterations"] = cfg.iterations;
  report["row_marginal_error"] = a.row_marginal_error;
  report["col_marginal_error"] = a.col_marginal_error;
  report["diag_mass"] = resa::mean_diagonal(a.values);
  std::cout << report.dump(2) << "\n";
  return 0;
}

int cmd_gradcheck(std::uint64_t seed) {
  const std::vector<resa::GradcheckReport> reports = resa::run_gradcheck(seed);
  bool all_pass = true;
  for (const auto& r : reports) {
    std::printf("%-28s worst=%.3e tol=%.0e %s\n", r.suite.c_str(), r.worst_error,
                r.tolerance, r.pass ? "pass" : "FAIL");
    all_pass = all_pass && r.pass;
  }
  return all_pass ? 0 : 1;
}

int cmd_compare(const std::string& config_path,
                const std::map<std::string, std::string>& overrides,
                const std::string& out_path, double baseline_tau,
                bool with_linear_probe) {
  resa::LabConfig cfg = resolve_config(config_path, overrides);
  const resa::Dataset ds = make_dataset(cfg);

  std::string csv =
      "method,epoch,loss,sc_mean,sc_std,ari,knn_acc,linear_acc,collapse_min_std,diag_mass\n";
  for (resa::LossVariant variant :
       {resa::LossVariant::ReSA, resa::LossVariant::InfoNCE, resa::LossVariant::SwAV}) {
    resa::LabConfig run_cfg = cfg;
    run_cfg.train.loss.variant = variant;
    if (variant != resa::LossVariant::ReSA) run_cfg.train.loss.tau = baseline_tau;
    const resa::TrainResult result = resa::train(ds.x, ds.labels, run_cfg);
    resa::MetricsRecord last = result.log.records.back();

    if (with_linear_probe) {
      // Probe the final encodings on the same deterministic split used for k-NN.
      const resa::detail::DataSplit split = resa::detail::make_split(
          run_cfg.train.seed, ds.x.rows, run_cfg.train.eval_fraction);
      const resa::Matrix x_eval =
          resa::detail::gather_rows(ds.x, split.eval_idx, 0, split.eval_idx.size());
      const std::vector<int> y_eval = resa::detail::gather_labels(ds.labels, split.eval_idx);
      const resa::Matrix h = resa::forward(result.net.online, x_eval, false).encoding;
      const std::size_t n_fit = std::max<std::size_t>(1, (h.rows * 4) / 5);
      resa::Matrix fit_x(n_fit, h.cols), test_x(h.rows - n_fit, h.cols);
      std::vector<int> fit_y(n_fit), test_y(h.rows - n_fit);
      for (std::size_t i = 0; i < h.rows; ++i) {
        if (i < n_fit) {
          std::copy(h.row(i), h.row(i) + h.cols, fit_x.row(i));
          fit_y[i] = y_eval[i];
        } else {
          std::copy(h.row(i), h.row(i) + h.cols, test_x.row(i - n_fit));
          test_y[i - n_fit] = y_eval[i];
        }
      }
      resa::Rng probe_rng(run_cfg.train.seed);
      last.linear_accuracy =
          resa::linear_probe(fit_x, fit_y, test_x, test_y, probe_rng);
    }

    char row[256];
    std::snprintf(row, sizeof(row), "%s,%zu,%.6f,%.6f,%.6f,%.6f,%.6f,%s,%.6g,%.6f\n",
                  resa::to_string(variant), last.epoch, last.loss, last.sc_mean,
                  last.sc_std, last.ari, last.knn_accuracy,
                  last.linear_accuracy
                      ? std::to_string(*last.linear_accuracy).c_str()
                      : "",
                  last.collapse_min_std, last.assignment_diag_mass);
    csv += row;
  }

  if (out_path.empty())
    std::cout << csv;
  else
    write_text(out_path, csv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-assignment representation learning laboratory"};
  app.require_subcommand(1);

  std::map<std::string, std::string> train_overrides, compare_overrides;
  std::string train_config, train_out = "run", train_resume;
  auto* train = app.add_subcommand("train", "run the training loop");
  train->add_option("--config", train_config, "flat JSON config file");
  train->add_option("--out", train_out, "output directory");
  train->add_option("--resume", train_resume, "checkpoint to resume from");
  add_config_overrides(train, train_overrides);

  std::string metrics_features, metrics_labels;
  std::uint64_t metrics_seed = 7;
  std::size_t metrics_knn_k = 5;
  bool metrics_linear = false;
  auto* metrics = app.add_subcommand("metrics", "clustering diagnostics for a feature file");
  metrics->add_option("features", metrics_features, "feature matrix (.csv or binary)")
      ->required();
  metrics->add_option("labels", metrics_labels, "label file, one integer per line")
      ->required();
  metrics->add_option("--seed", metrics_seed, "k-means seed");
  metrics->add_option("--knn-k", metrics_knn_k, "k for the k-NN readout");
  metrics->add_flag("--linear", metrics_linear, "also fit the linear probe");

  std::string sk_matrix, sk_out;
  double sk_epsilon = 0.05;
  std::size_t sk_iterations = 3;
  auto* sinkhorn = app.add_subcommand("sinkhorn", "balanced assignment of a similarity matrix");
  sinkhorn->add_option("matrix", sk_matrix, "square similarity matrix file")->required();
  sinkhorn->add_option("--out", sk_out, "write the assignment matrix here");
  sinkhorn->add_option("--epsilon", sk_epsilon, "regularization");
  sinkhorn->add_option("--iterations", sk_iterations, "balancing rounds");

  std::uint64_t gc_seed = 7;
  auto* gradcheck = app.add_subcommand("gradcheck", "analytic vs numeric gradients");
  gradcheck->add_option("--seed", gc_seed, "suite seed");

  std::string cmp_config, cmp_out;
  double cmp_baseline_tau = 0.1;
  bool cmp_linear = false;
  auto* compare = app.add_subcommand("compare", "side-by-side objective comparison");
  compare->add_option("--config", cmp_config, "flat JSON config file");
  compare->add_option("--out", cmp_out, "CSV output path (stdout when omitted)");
  compare->add_option("--baseline-tau", cmp_baseline_tau,
                      "temperature for the two baselines");
  compare->add_flag("--linear", cmp_linear, "probe final encodings linearly");
  add_config_overrides(compare, compare_overrides);

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed())
      return cmd_train(train_config, train_overrides, train_out, train_resume);
    if (metrics->parsed())
      return cmd_metrics(metrics_features, metrics_labels, metrics_seed,
                         metrics_knn_k, metrics_linear);
    if (sinkhorn->parsed())
      return cmd_sinkhorn(sk_matrix, sk_out, sk_epsilon, sk_iterations);
    if (gradcheck->parsed()) return cmd_gradcheck(gc_seed);
    if (compare->parsed())
      return cmd_compare(cmp_config, compare_overrides, cmp_out, cmp_baseline_tau,
                         cmp_linear);
  } catch (const resa::Error& e) {
    std::cerr << "ERROR:" << e.kind() << ": " << e.message() << "\n";
    return e.kind() == "NonFiniteLoss" ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "ERROR:Internal: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
