#pragma once

#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

#include <json.hpp>

#include <tpsf/core/types.hpp>

namespace tpsf {

enum class Domain { FD, MC };

std::string_view to_string(Domain d);
Domain domain_from_string(std::string_view s);

/// TPSF rows with their optical-property labels. All rows share one time grid.
struct LabeledDataset {
  std::vector<TpsfSignal> signals;
  std::vector<OpticalProperties> labels;
  Domain domain = Domain::FD;
  /// Echo of the generator configuration, stored verbatim in the metadata.
  nlohmann::json generator = nlohmann::json::object();
  std::uint64_t seed = 0;

  std::size_t size() const noexcept { return signals.size(); }
  TimeGrid grid() const;
  /// Throws ShapeMismatch / LabelMismatch / InvalidArgument on broken invariants.
  void validate() const;
  /// Copy of the rows listed in `indices`, in that order.
  LabeledDataset subset(const std::vector<std::size_t> &indices) const;
};

/// Writes `<prefix>.npy` (signals, shape [n, n_bins]) and `<prefix>.meta.json`.
void write_dataset(const LabeledDataset &ds, const std::filesystem::path &prefix);
LabeledDataset read_dataset(const std::filesystem::path &prefix);

std::filesystem::path npy_path(const std::filesystem::path &prefix);
std::filesystem::path meta_path(const std::filesystem::path &prefix);

} // namespace tpsf
