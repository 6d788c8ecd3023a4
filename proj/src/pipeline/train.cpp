#include <tpsf/pipeline/train.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <numeric>
#include <string>

#include <tpsf/core/error.hpp>
#include <tpsf/core/parallel.hpp>
#include <tpsf/core/rng.hpp>
#include <tpsf/fd/dom.hpp>
#include <tpsf/mc/photon_mc.hpp>
#include <tpsf/nn/optim.hpp>
#include <tpsf/sigproc/sigproc.hpp>

namespace tpsf::pipeline {
namespace {

using Eigen::Index;
using Eigen::MatrixXd;

// Gradients are reduced over fixed column chunks so that the sum order, and
// therefore every bit of the result, is the same for any thread count.
constexpr std::size_t kChunk = 32;

constexpr std::uint64_t kShuffleKey = 0x5348;
constexpr std::uint64_t kDropoutKey = 0x4452;
constexpr std::uint64_t kAugmentKey = 0x4147;

Index ix(std::size_t v) { return static_cast<Index>(v); }

MatrixXd gather(const MatrixXd &src, std::span<const std::size_t> cols) {
  MatrixXd out(src.rows(), ix(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k)
    out.col(ix(k)) = src.col(ix(cols[k]));
  return out;
}

template <typename T> std::vector<T> pick(const std::vector<T> &src, std::span<const std::size_t> idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (auto i : idx)
    out.push_back(src[i]);
  return out;
}

std::size_t n_chunks(std::size_t n) { return (n + kChunk - 1) / kChunk; }

} // namespace

LabeledDataset generate_dataset(const GenerationConfig &cfg, unsigned threads,
                                const std::function<void(std::size_t, std::size_t)> &progress) {
  return generate_rows(cfg, 0, cfg.n_samples, threads, progress);
}

LabeledDataset generate_rows(const GenerationConfig &cfg, std::size_t first, std::size_t last, unsigned threads,
                             const std::function<void(std::size_t, std::size_t)> &progress) {
  cfg.validate();
  require(first < last && last <= cfg.n_samples, "row range must be non-empty and inside the design");
  const auto all = sample_parameter_grid(cfg.range_a, cfg.range_s, cfg.n_samples, cfg.sampling, cfg.seed, cfg.g, cfg.n);
  LabeledDataset ds;
  ds.domain = cfg.domain;
  ds.seed = cfg.seed;
  ds.generator = to_json(cfg);
  ds.labels.assign(all.begin() + std::ptrdiff_t(first), all.begin() + std::ptrdiff_t(last));
  ds.signals.resize(last - first);

  std::mutex mu;
  std::size_t done = 0;
  parallel_for(last - first, threads, [&](std::size_t k) {
    const std::size_t i = first + k;
    if (cfg.domain == Domain::FD) {
      fd::DomConfig fc = cfg.fd;
      fc.threads = 1;
      ds.signals[k] = fd::run_fd(all[i], fc);
    } else {
      mc::McConfig mcfg = cfg.mc;
      mcfg.threads = 1;
      mcfg.progress = false;
      mcfg.rng_seed = derive_seed(cfg.seed, i);
      ds.signals[k] = mc::run_mc(all[i], mcfg).signal;
    }
    if (progress) {
      std::lock_guard lock(mu);
      progress(++done, last - first);
    }
  });
  ds.validate();
  return ds;
}

Split split_dataset(std::size_t n, const SplitFractions &f, std::uint64_t seed) {
  f.validate();
  const auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(n) * f.train + 1e-9));
  const auto n_val = static_cast<std::size_t>(std::floor(static_cast<double>(n) * f.val + 1e-9));
  if (n_train == 0 || n_val == 0 || n_train + n_val >= n)
    fail(ErrorCode::InsufficientData, std::to_string(n) + " samples leave an empty train, val or test split");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  CounterRng rng(seed, kShuffleKey);
  shuffle(order.begin(), order.end(), rng);
  Split s;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
               order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
  return s;
}

Prepared preprocess(const LabeledDataset &ds, std::span<const std::size_t> rows, bool training,
                    const PreprocessSpec &spec, const nn::ModelConfig &model, std::uint64_t seed) {
  ds.validate();
  if (ds.grid().n_bins != model.input_len)
    fail(ErrorCode::ConfigMismatch, "signals have " + std::to_string(ds.grid().n_bins) +
                                        " bins but the model expects " + std::to_string(model.input_len));
  const bool mc = ds.domain == Domain::MC;
  const bool augment = mc && training;
  const auto ba = model.binning_a();
  const auto bs = model.binning_s();

  Prepared out;
  const std::size_t n = rows.size() * (augment ? 2 : 1);
  out.inputs.resize(ix(model.input_len), ix(n));
  auto push = [&](const TpsfSignal &signal, std::size_t row, bool aug) {
    const TpsfSignal ready = mc ? sig::savgol_filter(signal, spec.savgol) : signal;
    const auto v = sig::normalize_for_network(ready, spec.floor_ratio);
    out.inputs.col(ix(out.source.size())) = Eigen::Map<const Eigen::VectorXd>(v.data(), ix(v.size()));
    const auto &label = ds.labels[row];
    out.labels.push_back(label);
    out.target_a.push_back(nn::bin_encode(label.mu_a(), ba));
    out.target_s.push_back(nn::bin_encode(label.mu_s_prime(), bs));
    out.source.push_back(row);
    out.augmented.push_back(aug);
  };
  for (auto row : rows) {
    require(row < ds.size(), "preprocess row index out of range");
    push(ds.signals[row], row, false);
    if (augment) {
      CounterRng rng(derive_seed(seed, kAugmentKey), row);
      push(sig::augment_proportional_noise(ds.signals[row], spec.noise_alpha, rng), row, true);
    }
  }
  return out;
}

FitResult fit(nn::DualHeadModel &model, const Prepared &train, const Prepared &val, const FitOptions &o) {
  require(train.size() > 0 && val.size() > 0, "training needs non-empty train and validation sets");
  require(o.batch_size >= 1 && o.epochs >= 1, "batch_size and epochs must be at least 1");
  const std::size_t n = train.size();
  const std::size_t n_params = model.params().size();

  nn::AdamState adam(n_params);
  nn::PlateauScheduler scheduler(o.scheduler_factor, o.scheduler_patience);
  std::vector<double> lrs{o.freeze_lstm ? 0.0 : o.lr_lstm, o.lr_fc};

  FitResult result;
  result.best_val_loss = std::numeric_limits<double>::infinity();
  std::vector<double> best(model.params().begin(), model.params().end());
  std::vector<std::size_t> order(n);
  std::vector<double> grads(n_params);

  for (std::size_t epoch = 1; epoch <= o.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    CounterRng rng(derive_seed(o.seed, kShuffleKey, epoch));
    shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n; start += o.batch_size) {
      const std::size_t b = std::min(o.batch_size, n - start);
      const std::span<const std::size_t> batch(order.data() + start, b);
      const std::size_t chunks = n_chunks(b);
      std::vector<nn::ParamVector> chunk_grads(chunks);
      std::vector<double> chunk_loss(chunks);
      parallel_for(chunks, o.threads, [&](std::size_t c) {
        const auto cols = batch.subspan(c * kChunk, std::min(kChunk, b - c * kChunk));
        std::vector<std::uint64_t> keys;
        keys.reserve(cols.size());
        for (auto col : cols)
          keys.push_back(derive_seed(o.seed, kDropoutKey + epoch, col));
        const auto ta = pick(train.target_a, cols), ts = pick(train.target_s, cols);
        const auto cache = nn::forward(model, gather(train.inputs, cols), true, keys);
        chunk_loss[c] = nn::batch_loss(cache, ta, ts, o.weight_a) * static_cast<double>(cols.size());
        chunk_grads[c] = nn::backward(model, cache, ta, ts, o.weight_a, !o.freeze_lstm);
      });

      double batch_sum = 0.0;
      std::fill(grads.begin(), grads.end(), 0.0);
      for (std::size_t c = 0; c < chunks; ++c) {
        batch_sum += chunk_loss[c];
        const double share = static_cast<double>(std::min(kChunk, b - c * kChunk)) / static_cast<double>(b);
        for (std::size_t i = 0; i < n_params; ++i)
          grads[i] += share * chunk_grads[c][i];
      }
      if (!std::isfinite(batch_sum))
        fail(ErrorCode::Diverged, "non-finite training loss in epoch " + std::to_string(epoch) + " at sample " +
                                      std::to_string(start));
      loss_sum += batch_sum;
      nn::adam_step(model, grads, adam, lrs[0], lrs[1]);
      result.visited.insert(result.visited.end(), batch.begin(), batch.end());
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(n);
    rec.val_loss = mean_loss(model, val, o.weight_a, o.threads);
    rec.lr_lstm = lrs[0];
    rec.lr_fc = lrs[1];
    if (!std::isfinite(rec.val_loss))
      fail(ErrorCode::Diverged, "non-finite validation loss in epoch " + std::to_string(epoch));
    result.history.push_back(rec);
    if (o.on_epoch)
      o.on_epoch(rec);

    if (rec.val_loss < result.best_val_loss) {
      result.best_val_loss = rec.val_loss;
      result.best_epoch = epoch;
      best.assign(model.params().begin(), model.params().end());
    }
    scheduler.step(rec.val_loss, lrs);
    if (o.early_stop_patience > 0 && epoch - result.best_epoch >= o.early_stop_patience)
      break;
  }
  auto p = model.params_mut();
  std::copy(best.begin(), best.end(), p.begin());
  return result;
}

FitOptions train_options(const TrainConfig &cfg, unsigned threads) {
  FitOptions o;
  o.epochs = cfg.epochs;
  o.batch_size = cfg.batch_size;
  o.lr_lstm = cfg.lr;
  o.lr_fc = cfg.lr;
  o.freeze_lstm = false;
  o.weight_a = cfg.weight_a;
  o.scheduler_patience = cfg.scheduler_patience;
  o.scheduler_factor = cfg.scheduler_factor;
  o.early_stop_patience = cfg.early_stop_patience;
  o.seed = cfg.seed;
  o.threads = threads;
  return o;
}

FitOptions finetune_options(const TrainConfig &cfg, unsigned threads) {
  FitOptions o = train_options(cfg, threads);
  o.lr_lstm = cfg.lr_lstm;
  o.lr_fc = cfg.lr_fc;
  o.freeze_lstm = cfg.freeze_lstm;
  return o;
}

double mean_loss(const nn::DualHeadModel &model, const Prepared &data, double weight_a, unsigned threads) {
  const std::size_t n = data.size();
  require(n > 0, "loss of an empty set");
  std::vector<double> sums(n_chunks(n));
  parallel_for(sums.size(), threads, [&](std::size_t c) {
    const std::size_t start = c * kChunk, len = std::min(kChunk, n - start);
    const auto cache = nn::forward(model, data.inputs.middleCols(ix(start), ix(len)), false);
    const std::span<const std::size_t> ta(data.target_a.data() + start, len), ts(data.target_s.data() + start, len);
    sums[c] = nn::batch_loss(cache, ta, ts, weight_a) * static_cast<double>(len);
  });
  return std::accumulate(sums.begin(), sums.end(), 0.0) / static_cast<double>(n);
}

Predictions predict(const nn::DualHeadModel &model, const MatrixXd &inputs, unsigned threads) {
  const auto n = static_cast<std::size_t>(inputs.cols());
  Predictions p;
  p.probs_a.resize(ix(model.config().n_bins_a), inputs.cols());
  p.probs_s.resize(ix(model.config().n_bins_s), inputs.cols());
  parallel_for(n_chunks(n), threads, [&](std::size_t c) {
    const std::size_t start = c * kChunk, len = std::min(kChunk, n - start);
    const auto cache = nn::forward(model, inputs.middleCols(ix(start), ix(len)), false);
    p.probs_a.middleCols(ix(start), ix(len)) = cache.head_a.probs;
    p.probs_s.middleCols(ix(start), ix(len)) = cache.head_s.probs;
  });
  return p;
}

ParamMetrics compute_metrics(std::span<const double> truth, std::span<const double> pred) {
  require(truth.size() == pred.size() && !truth.empty(), "metrics need matching non-empty vectors");
  ParamMetrics m;
  m.count = truth.size();
  const double n = static_cast<double>(truth.size());
  std::vector<double> e(truth.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    require(truth[i] > 0.0, "relative error needs positive ground truth");
    e[i] = (pred[i] - truth[i]) / truth[i];
    m.mre += std::abs(e[i]);
    m.bias += e[i];
    hits += std::abs(e[i]) <= 0.10 ? 1 : 0;
  }
  m.mre = 100.0 * m.mre / n;
  m.bias = 100.0 * m.bias / n;
  double var = 0.0;
  for (double v : e)
    var += (100.0 * v - m.bias) * (100.0 * v - m.bias);
  m.std = std::sqrt(var / n);
  m.success = 100.0 * static_cast<double>(hits) / n;
  return m;
}

EvalReport evaluate(const nn::DualHeadModel &model, const Prepared &test, nn::DecodeMode mode, unsigned threads) {
  require(test.size() > 0, "cannot evaluate an empty test set");
  const auto p = predict(model, test.inputs, threads);
  const auto ba = model.config().binning_a();
  const auto bs = model.config().binning_s();
  EvalReport r;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const Index c = ix(i);
    r.true_a.push_back(test.labels[i].mu_a());
    r.true_s.push_back(test.labels[i].mu_s_prime());
    r.pred_a.push_back(nn::bin_decode({p.probs_a.col(c).data(), static_cast<std::size_t>(p.probs_a.rows())}, ba, mode));
    r.pred_s.push_back(nn::bin_decode({p.probs_s.col(c).data(), static_cast<std::size_t>(p.probs_s.rows())}, bs, mode));
  }
  r.mu_a = compute_metrics(r.true_a, r.pred_a);
  r.mu_s_prime = compute_metrics(r.true_s, r.pred_s);
  return r;
}

nlohmann::json to_json(const ParamMetrics &m) {
  return {{"mre", m.mre}, {"bias", m.bias}, {"std", m.std}, {"success_rate", m.success}, {"count", m.count}};
}

nlohmann::json to_json(const EvalReport &r) {
  return {{"mu_a", to_json(r.mu_a)}, {"mu_s_prime", to_json(r.mu_s_prime)}};
}

} // namespace tpsf::pipeline
