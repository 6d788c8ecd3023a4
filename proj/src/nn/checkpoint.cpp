#include <tpsf/nn/checkpoint.hpp>

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <string>

#include <tpsf/core/error.hpp>

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace tpsf::nn {
namespace {

nlohmann::json binning_json(const ParamBinning &b) {
  return {{"lo", b.range().lo}, {"hi", b.range().hi}, {"n_bins", b.n_bins()}};
}

template <typename T> void write_pod(std::ofstream &out, const T &v) {
  out.write(reinterpret_cast<const char *>(&v), sizeof(T));
}

template <typename T> T read_pod(std::ifstream &in, const std::string &what) {
  T v{};
  if (!in.read(reinterpret_cast<char *>(&v), sizeof(T)))
    fail(ErrorCode::BadHeader, "truncated checkpoint " + what);
  return v;
}

} // namespace

void save_checkpoint(const std::filesystem::path &path, const DualHeadModel &model,
                     const nlohmann::json &provenance) {
  const nlohmann::json header = {{"model", to_json(model.config())},
                                 {"binning_a", binning_json(model.config().binning_a())},
                                 {"binning_s", binning_json(model.config().binning_s())},
                                 {"provenance", provenance},
                                 {"n_params", model.params().size()}};
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out)
    fail(ErrorCode::MissingFile, "cannot open " + path.string() + " for writing");
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  write_pod(out, kCheckpointVersion);
  write_pod(out, static_cast<std::uint64_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  const auto p = model.params();
  out.write(reinterpret_cast<const char *>(p.data()), static_cast<std::streamsize>(p.size() * sizeof(double)));
  if (!out)
    fail(ErrorCode::MissingFile, "failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    fail(ErrorCode::MissingFile, "cannot open checkpoint " + path.string());
  char magic[sizeof kCheckpointMagic];
  if (!in.read(magic, sizeof magic) || !std::equal(magic, magic + sizeof magic, kCheckpointMagic))
    fail(ErrorCode::BadMagic, path.string() + " is not a checkpoint");
  const auto version = read_pod<std::uint32_t>(in, "version");
  if (version != kCheckpointVersion)
    fail(ErrorCode::BadHeader, "unsupported checkpoint version " + std::to_string(version));
  const auto len = read_pod<std::uint64_t>(in, "header length");
  if (len > (1u << 24))
    fail(ErrorCode::BadHeader, "implausible checkpoint header length");
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len)))
    fail(ErrorCode::BadHeader, "truncated checkpoint header");

  nlohmann::json header;
  ModelConfig cfg;
  std::size_t n_params = 0;
  try {
    header = nlohmann::json::parse(text);
    cfg = model_config_from_json(header.at("model"));
    n_params = header.at("n_params").get<std::size_t>();
  } catch (const nlohmann::json::exception &e) {
    fail(ErrorCode::BadHeader, std::string("malformed checkpoint header: ") + e.what());
  }

  Checkpoint ck{DualHeadModel(cfg), header.value("provenance", nlohmann::json::object())};
  auto p = ck.model.params_mut();
  if (n_params != p.size())
    fail(ErrorCode::ShapeMismatch, "checkpoint holds " + std::to_string(n_params) + " parameters, config implies " +
                                       std::to_string(p.size()));
  if (!in.read(reinterpret_cast<char *>(p.data()), static_cast<std::streamsize>(p.size() * sizeof(double))))
    fail(ErrorCode::ShapeMismatch, "checkpoint parameter blob is truncated");
  if (in.peek() != std::ifstream::traits_type::eof())
    fail(ErrorCode::ShapeMismatch, "trailing bytes after checkpoint parameters");
  return ck;
}

} // namespace tpsf::nn
