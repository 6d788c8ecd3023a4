#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include <tpsf/core/dataset.hpp>
#include <tpsf/core/sampling.hpp>
#include <tpsf/fd/dom.hpp>
#include <tpsf/mc/photon_mc.hpp>
#include <tpsf/nn/binning.hpp>
#include <tpsf/nn/model.hpp>
#include <tpsf/sigproc/sigproc.hpp>

namespace tpsf::pipeline {

/// Dataset generation settings. Only the solver block matching `domain` is used.
struct GenerationConfig {
  Domain domain = Domain::FD;
  std::size_t n_samples = 1000;
  SamplingMode sampling = SamplingMode::LatinRandom;
  std::uint64_t seed = 1;
  ParamRange range_a = kDefaultMuARange;
  ParamRange range_s = kDefaultMuSPrimeRange;
  double g = kDefaultAnisotropy;
  double n = kDefaultRefractiveIndex;
  fd::DomConfig fd;
  mc::McConfig mc;

  /// Desk-scale defaults: 1000 FD samples, 300 MC samples at 1e5 photons.
  static GenerationConfig defaults(Domain domain);
  void validate() const;
};

struct SplitFractions {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;

  void validate() const;
};

struct PreprocessSpec {
  sig::SavGolSpec savgol;
  double floor_ratio = sig::kDefaultFloorRatio;
  double noise_alpha = 1e-4;
};

/// Everything a training or evaluation stage needs besides the data.
struct TrainConfig {
  std::size_t epochs = 60;
  std::size_t batch_size = 32;
  double lr = 5e-4;      ///< single rate for pretraining and scratch runs
  double lr_lstm = 5e-5; ///< fine-tuning rate of the recurrent trunk
  double lr_fc = 5e-4;   ///< fine-tuning rate of the heads
  bool freeze_lstm = false;
  double weight_a = 2.0;
  std::size_t scheduler_patience = 10;
  double scheduler_factor = 0.5;
  /// Stop after this many epochs without a new best validation loss (0 = never).
  std::size_t early_stop_patience = 0;
  std::uint64_t seed = 1;
  SplitFractions split;
  PreprocessSpec preprocess;
  nn::DecodeMode decode = nn::DecodeMode::ArgmaxCenter;
  nn::ModelConfig model;

  void validate() const;
};

nlohmann::json to_json(const GenerationConfig &cfg);
GenerationConfig generation_from_json(const nlohmann::json &j, Domain domain);

nlohmann::json to_json(const TrainConfig &cfg);
TrainConfig train_from_json(const nlohmann::json &j);

/// Layers `file` and then `overrides` ("dotted.key=value") onto `defaults`.
/// Every key must already exist in `defaults`; values are parsed as JSON and
/// fall back to plain strings. Objects merge recursively, everything else is
/// replaced.
nlohmann::json resolve_config(nlohmann::json defaults, const nlohmann::json &file,
                              const std::vector<std::string> &overrides);

/// Sets one dotted key; throws InvalidArgument for paths absent from `j`.
void apply_override(nlohmann::json &j, const std::string &assignment);

} // namespace tpsf::pipeline
