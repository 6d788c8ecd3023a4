#include <tpsf/nn/optim.hpp>

#include <cmath>
#include <limits>

#include <tpsf/core/error.hpp>

namespace tpsf::nn {

void adam_step(std::span<double> params, std::size_t trunk_size, std::span<const double> grads, AdamState &state,
               double lr_lstm, double lr_fc, const AdamConfig &cfg) {
  const std::size_t n = params.size();
  if (grads.size() != n || state.m.size() != n || state.v.size() != n)
    fail(ErrorCode::ShapeMismatch, "optimizer state does not match parameter count");
  require(trunk_size <= n, "trunk size exceeds parameter count");
  require(lr_lstm >= 0.0 && lr_fc >= 0.0, "learning rates must be non-negative");

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grads[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    const double lr = i < trunk_size ? lr_lstm : lr_fc;
    if (lr == 0.0)
      continue;
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
  }
}

void adam_step(DualHeadModel &model, std::span<const double> grads, AdamState &state, double lr_lstm, double lr_fc,
               const AdamConfig &cfg) {
  adam_step(model.params_mut(), model.trunk_size(), grads, state, lr_lstm, lr_fc, cfg);
}

PlateauScheduler::PlateauScheduler(double factor, std::size_t patience, double threshold)
    : factor_(factor), patience_(patience), threshold_(threshold), best_(std::numeric_limits<double>::infinity()) {
  require(factor > 0.0 && factor < 1.0, "scheduler factor must lie in (0, 1)");
  require(patience >= 1, "scheduler patience must be at least 1");
  require(threshold >= 0.0, "scheduler threshold must be non-negative");
}

bool PlateauScheduler::step(double val_loss, std::span<double> lrs) {
  if (val_loss < best_ * (1.0 - threshold_)) {
    best_ = val_loss;
    num_bad_ = 0;
    return false;
  }
  if (++num_bad_ < patience_)
    return false;
  for (double &lr : lrs)
    lr *= factor_;
  num_bad_ = 0;
  return true;
}

} // namespace tpsf::nn
