#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <tpsf/nn/model.hpp>

namespace tpsf::nn {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::size_t step = 0;

  explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

/// One bias-corrected Adam update. Trunk parameters use lr_lstm and head
/// parameters lr_fc. A zero rate leaves that block bit-identical.
void adam_step(DualHeadModel &model, std::span<const double> grads, AdamState &state, double lr_lstm, double lr_fc,
               const AdamConfig &cfg = {});

/// Same update on a bare parameter vector whose first `trunk_size` entries use lr_lstm.
void adam_step(std::span<double> params, std::size_t trunk_size, std::span<const double> grads, AdamState &state,
               double lr_lstm, double lr_fc, const AdamConfig &cfg = {});

/// Reduce-on-plateau: after `patience` consecutive epochs without a relative
/// improvement above `threshold`, every rate is multiplied by `factor`.
class PlateauScheduler {
public:
  PlateauScheduler(double factor = 0.5, std::size_t patience = 10, double threshold = 1e-4);

  /// Feeds one validation loss; returns true when the rates were reduced.
  bool step(double val_loss, std::span<double> lrs);

  double best() const { return best_; }
  std::size_t num_bad_epochs() const { return num_bad_; }

private:
  double factor_;
  std::size_t patience_;
  double threshold_;
  double best_;
  std::size_t num_bad_ = 0;
};

} // namespace tpsf::nn
