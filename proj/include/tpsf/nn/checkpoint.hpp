#pragma once

#include <filesystem>

#include <json.hpp>

#include <tpsf/nn/model.hpp>

namespace tpsf::nn {

inline constexpr char kCheckpointMagic[8] = {'T', 'P', 'S', 'F', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  DualHeadModel model;
  nlohmann::json provenance = nlohmann::json::object();
};

/// Layout: 8-byte magic, u32 version, u64 header length, JSON header
/// (model config, both binnings, provenance, parameter count), then the
/// parameters as little-endian f64 in layout order.
void save_checkpoint(const std::filesystem::path &path, const DualHeadModel &model,
                     const nlohmann::json &provenance = nlohmann::json::object());
Checkpoint load_checkpoint(const std::filesystem::path &path);

} // namespace tpsf::nn
