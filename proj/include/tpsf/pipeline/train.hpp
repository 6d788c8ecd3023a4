#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include <tpsf/core/dataset.hpp>
#include <tpsf/nn/model.hpp>
#include <tpsf/pipeline/config.hpp>

namespace tpsf::pipeline {

/// Renders one dataset per configuration. Sample i of an MC run uses the
/// photon stream seeded by derive_seed(seed, i), so results do not depend on
/// `threads`.
LabeledDataset generate_dataset(const GenerationConfig &cfg, unsigned threads,
                                const std::function<void(std::size_t, std::size_t)> &progress = {});

/// Rows [first, last) of the dataset generate_dataset(cfg) would produce,
/// bit-identical to the corresponding slice of the full run.
LabeledDataset generate_rows(const GenerationConfig &cfg, std::size_t first, std::size_t last, unsigned threads,
                             const std::function<void(std::size_t, std::size_t)> &progress = {});

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

/// Seeded shuffle of [0, n) cut into train / val / test. The first two sizes
/// are floor(n f); the test split takes the remainder.
Split split_dataset(std::size_t n, const SplitFractions &fractions, std::uint64_t seed);

/// Network-ready columns with their class targets.
struct Prepared {
  Eigen::MatrixXd inputs; ///< n_bins x N
  std::vector<std::size_t> target_a;
  std::vector<std::size_t> target_s;
  std::vector<OpticalProperties> labels;
  std::vector<std::size_t> source; ///< dataset row behind each column
  std::vector<bool> augmented;

  std::size_t size() const { return source.size(); }
};

/// MC rows: with `training` set, each row is followed by a noise-augmented
/// copy; all rows are then Savitzky-Golay filtered and normalized. FD rows are
/// only normalized. Augmentation noise for row r comes from a stream keyed by
/// (seed, r).
Prepared preprocess(const LabeledDataset &ds, std::span<const std::size_t> rows, bool training,
                    const PreprocessSpec &spec, const nn::ModelConfig &model, std::uint64_t seed);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr_lstm = 0.0;
  double lr_fc = 0.0;
};

struct FitOptions {
  std::size_t epochs = 1;
  std::size_t batch_size = 32;
  double lr_lstm = 5e-4;
  double lr_fc = 5e-4;
  bool freeze_lstm = false;
  double weight_a = 2.0;
  std::size_t scheduler_patience = 10;
  double scheduler_factor = 0.5;
  std::size_t early_stop_patience = 0;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  /// Called after every epoch, e.g. for progress output.
  std::function<void(const EpochRecord &)> on_epoch;
};

struct FitResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  /// Every training column index visited, in visiting order (leakage audits).
  std::vector<std::size_t> visited;
};

/// Minibatch Adam with a plateau scheduler on validation loss. The model is
/// left at the parameters of the best validation epoch.
FitResult fit(nn::DualHeadModel &model, const Prepared &train, const Prepared &val, const FitOptions &opts);

/// Single-rate options used by pretraining and scratch runs.
FitOptions train_options(const TrainConfig &cfg, unsigned threads);
/// Differential-rate options used for fine-tuning.
FitOptions finetune_options(const TrainConfig &cfg, unsigned threads);

/// Mean composite loss in eval mode.
double mean_loss(const nn::DualHeadModel &model, const Prepared &data, double weight_a, unsigned threads = 1);

/// Head probabilities in eval mode, one column per sample.
struct Predictions {
  Eigen::MatrixXd probs_a;
  Eigen::MatrixXd probs_s;
};
Predictions predict(const nn::DualHeadModel &model, const Eigen::MatrixXd &inputs, unsigned threads = 1);

struct ParamMetrics {
  double mre = 0.0;     ///< mean |e| in percent
  double bias = 0.0;    ///< mean e in percent
  double std = 0.0;     ///< population standard deviation of e in percent
  double success = 0.0; ///< percent of samples with |e| <= 10 %
  std::size_t count = 0;
};

/// Relative errors e = (pred - truth) / truth.
ParamMetrics compute_metrics(std::span<const double> truth, std::span<const double> pred);

struct EvalReport {
  ParamMetrics mu_a;
  ParamMetrics mu_s_prime;
  std::vector<double> true_a, pred_a, true_s, pred_s;
};

EvalReport evaluate(const nn::DualHeadModel &model, const Prepared &test, nn::DecodeMode mode, unsigned threads = 1);

nlohmann::json to_json(const ParamMetrics &m);
nlohmann::json to_json(const EvalReport &r);

} // namespace tpsf::pipeline
