#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include <tpsf/core/types.hpp>
#include <tpsf/nn/binning.hpp>

namespace tpsf::nn {

struct ModelConfig {
  std::size_t input_len = 200;
  std::size_t hidden_size = 32;
  std::size_t num_layers = 2;
  double dropout = 0.2;
  std::size_t n_bins_a = 32;
  std::size_t n_bins_s = 32;
  std::size_t head_hidden = 64;
  ParamRange range_a = kDefaultMuARange;
  ParamRange range_s = kDefaultMuSPrimeRange;

  void validate() const;
  ParamBinning binning_a() const { return {range_a, n_bins_a}; }
  ParamBinning binning_s() const { return {range_s, n_bins_s}; }

  friend bool operator==(const ModelConfig &, const ModelConfig &) = default;
};

/// Flat parameter or gradient storage. Always 64-byte aligned: Eigen picks
/// different reduction orders for aligned and peeled coefficients, so the
/// buffer address must not vary between copies or calls.
using ParamVector = std::vector<double, Eigen::aligned_allocator<double>>;

nlohmann::json to_json(const ModelConfig &cfg);
ModelConfig model_config_from_json(const nlohmann::json &j, ModelConfig base = {});

/// Location of one tensor inside the flat parameter vector (column-major).
struct Slot {
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 1;

  std::size_t size() const { return rows * cols; }
};

/// One direction of one LSTM layer. Gate rows are ordered input, forget,
/// cell candidate, output.
struct LstmSlots {
  Slot wx; ///< 4h x in
  Slot wh; ///< 4h x h
  Slot b;  ///< 4h
};

struct HeadSlots {
  Slot w1; ///< head_hidden x 2h
  Slot b1;
  Slot w2; ///< n_bins x head_hidden
  Slot b2;
};

/// Parameter layout: trunk (layer-major, forward before backward direction)
/// followed by head a and head s. The trunk occupies [0, trunk_size).
struct ParamLayout {
  std::vector<std::array<LstmSlots, 2>> lstm;
  HeadSlots head_a;
  HeadSlots head_s;
  std::size_t trunk_size = 0;
  std::size_t total = 0;

  explicit ParamLayout(const ModelConfig &cfg);
};

/// Dual-head bidirectional LSTM classifier. All parameters live in one flat
/// vector laid out by ParamLayout.
class DualHeadModel {
public:
  explicit DualHeadModel(const ModelConfig &cfg);
  DualHeadModel(const ModelConfig &cfg, std::uint64_t init_seed);

  const ModelConfig &config() const { return cfg_; }
  const ParamLayout &layout() const { return layout_; }
  std::span<const double> params() const { return params_; }
  std::span<double> params_mut() {
    ++version_;
    return params_;
  }
  std::size_t trunk_size() const { return layout_.trunk_size; }
  /// Bumped on every parameter mutation; caches from older versions are stale.
  std::uint64_t version() const { return version_; }

  Eigen::Map<const Eigen::MatrixXd> view(const Slot &s) const;

  /// Uniform +-1/sqrt(h) weights, forget-gate bias 1, other biases 0.
  void initialize(std::uint64_t seed);
  /// Swaps the forward and backward direction parameters of every layer.
  void swap_directions();

private:
  ModelConfig cfg_;
  ParamLayout layout_;
  ParamVector params_;
  std::uint64_t version_ = 0;
};

/// Per-direction recurrence record, all matrices column-blocked by time
/// (block t holds columns [t B, (t + 1) B)).
struct DirectionCache {
  Eigen::MatrixXd gates; ///< 4h x TB, post-activation
  Eigen::MatrixXd cell;  ///< h x TB
  Eigen::MatrixXd hidden;
  Eigen::MatrixXd tanh_cell;
};

struct LayerCache {
  Eigen::MatrixXd input; ///< in x TB, after dropout
  Eigen::MatrixXd mask;  ///< dropout scale factors (empty for layer 0 or eval)
  std::array<DirectionCache, 2> dir;
};

struct HeadCache {
  Eigen::MatrixXd pre;    ///< head_hidden x B
  Eigen::MatrixXd act;    ///< ReLU output
  Eigen::MatrixXd logits; ///< n_bins x B
  Eigen::MatrixXd probs;
};

struct ForwardCache {
  std::size_t batch = 0;
  bool train_mode = false;
  std::uint64_t model_version = 0;
  bool valid = false;
  std::vector<LayerCache> layers;
  Eigen::MatrixXd representation; ///< 2h x B
  HeadCache head_a;
  HeadCache head_s;
};

/// Batched forward pass. `inputs` is T x B (one column per sequence).
/// `dropout_keys` supplies one key per column; masks are drawn from it in train
/// mode only, so a sample's mask does not depend on how batches are split.
ForwardCache forward(const DualHeadModel &model, const Eigen::MatrixXd &inputs, bool train_mode,
                     std::span<const std::uint64_t> dropout_keys = {});

/// Numerically stable -log softmax(logits)[target].
double cross_entropy(std::span<const double> logits, std::size_t target);

/// weight_a CE_a + CE_s for one sample.
double composite_loss(std::span<const double> logits_a, std::span<const double> logits_s, std::size_t target_a,
                      std::size_t target_s, double weight_a);

/// Mean composite loss over the batch held in `cache`.
double batch_loss(const ForwardCache &cache, std::span<const std::size_t> targets_a,
                  std::span<const std::size_t> targets_s, double weight_a);

/// Gradient of the mean composite loss with respect to every parameter.
/// With `trunk` false only the head gradients are computed (trunk entries stay 0).
ParamVector backward(const DualHeadModel &model, const ForwardCache &cache,
                             std::span<const std::size_t> targets_a, std::span<const std::size_t> targets_s,
                             double weight_a, bool trunk = true);

/// FNV-1a over the raw parameter bytes.
std::uint64_t model_hash(const DualHeadModel &model);

} // namespace tpsf::nn
