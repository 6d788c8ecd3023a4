#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include <tpsf/core/dataset.hpp>
#include <tpsf/nn/model.hpp>
#include <tpsf/pipeline/config.hpp>
#include <tpsf/pipeline/train.hpp>

namespace tpsf::pipeline {

/// The three ways of producing an MC-domain model: evaluate the FD model
/// unchanged, adapt it on MC data, or train a fresh model on MC data alone.
enum class Preset { Direct, Finetune, Scratch };

std::string_view to_string(Preset p);
Preset preset_from_string(std::string_view s);

struct StageResult {
  nn::DualHeadModel model;
  Split split;
  FitResult fit; ///< empty for Direct
  EvalReport report; ///< on the test split of the stage's dataset
};

using EpochCallback = std::function<void(const EpochRecord &)>;

/// Seed of the initial weights for a configuration.
std::uint64_t init_seed(const TrainConfig &cfg);

/// Trains on the FD dataset with the single rate cfg.lr and evaluates on its test split.
StageResult pretrain(const LabeledDataset &fd, const TrainConfig &cfg, unsigned threads,
                     const EpochCallback &on_epoch = {});

/// Runs one preset on the MC dataset. Direct and Finetune need `pretrained`,
/// whose configuration must equal cfg.model (ConfigMismatch otherwise).
StageResult run_preset(Preset preset, const nn::DualHeadModel *pretrained, const LabeledDataset &mc,
                       const TrainConfig &cfg, unsigned threads, const EpochCallback &on_epoch = {});

/// Throws unless the splits are disjoint, augmented columns only occur in
/// training data, and every visited training column comes from the train split.
void audit_no_leakage(const Split &split, const Prepared &train, const Prepared &val, const Prepared &test,
                      const FitResult &fit);

struct MatrixEntry {
  std::string name;
  Preset preset = Preset::Finetune;
  TrainConfig config;
};

struct MatrixRow {
  MatrixEntry entry;
  bool ok = false;
  std::string error;
  EvalReport report;
  std::uint64_t model_hash = 0;
  std::size_t best_epoch = 0;
};

/// Parses {"base": {train config}, "entries": [{"name", "preset", "set": {...}}]}.
/// Each entry's "set" object is merged onto the base configuration.
std::vector<MatrixEntry> matrix_from_json(const nlohmann::json &j);
nlohmann::json matrix_defaults();

/// Runs every entry independently; a failing entry is recorded and the matrix continues.
std::vector<MatrixRow> run_experiment_matrix(const std::vector<MatrixEntry> &entries,
                                             const nn::DualHeadModel *pretrained, const LabeledDataset &mc,
                                             unsigned threads,
                                             const std::function<void(const MatrixRow &)> &on_row = {});

void write_matrix_csv(const std::filesystem::path &path, const std::vector<MatrixRow> &rows);
void write_report_json(const std::filesystem::path &path, const EvalReport &report, const nlohmann::json &extra = {});
void write_scatter_csv(const std::filesystem::path &path, const EvalReport &report);
void write_history_csv(const std::filesystem::path &path, const FitResult &fit);

} // namespace tpsf::pipeline
