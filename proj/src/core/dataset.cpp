#include <tpsf/core/dataset.hpp>

#include <fstream>
#include <string>

#include <tpsf/core/error.hpp>
#include <tpsf/core/npy.hpp>

namespace tpsf {

std::string_view to_string(Domain d) { return d == Domain::FD ? "FD" : "MC"; }

Domain domain_from_string(std::string_view s) {
  if (s == "FD")
    return Domain::FD;
  if (s == "MC")
    return Domain::MC;
  fail(ErrorCode::BadHeader, "unknown domain tag '" + std::string(s) + "'");
}

TimeGrid LabeledDataset::grid() const {
  require(!signals.empty(), "empty dataset has no time grid");
  return signals.front().grid();
}

void LabeledDataset::validate() const {
  if (signals.empty())
    fail(ErrorCode::ShapeMismatch, "dataset must contain at least one signal");
  if (signals.size() != labels.size())
    fail(ErrorCode::LabelMismatch, "dataset has " + std::to_string(signals.size()) + " signals but " +
                                       std::to_string(labels.size()) + " labels");
  const TimeGrid g = signals.front().grid();
  for (const auto &s : signals) {
    s.validate();
    if (!(s.grid() == g))
      fail(ErrorCode::ShapeMismatch, "dataset signals do not share one time grid");
  }
}

LabeledDataset LabeledDataset::subset(const std::vector<std::size_t> &indices) const {
  LabeledDataset out;
  out.domain = domain;
  out.generator = generator;
  out.seed = seed;
  out.signals.reserve(indices.size());
  out.labels.reserve(indices.size());
  for (auto i : indices) {
    require(i < size(), "subset index out of range");
    out.signals.push_back(signals[i]);
    out.labels.push_back(labels[i]);
  }
  return out;
}

std::filesystem::path npy_path(const std::filesystem::path &prefix) { return prefix.string() + ".npy"; }
std::filesystem::path meta_path(const std::filesystem::path &prefix) { return prefix.string() + ".meta.json"; }

void write_dataset(const LabeledDataset &ds, const std::filesystem::path &prefix) {
  ds.validate();
  const TimeGrid g = ds.grid();

  NpyArray array{ds.size(), g.n_bins, {}};
  array.data.reserve(array.rows * array.cols);
  for (const auto &s : ds.signals)
    array.data.insert(array.data.end(), s.values.begin(), s.values.end());
  write_npy(npy_path(prefix), array);

  nlohmann::json labels = nlohmann::json::array();
  for (const auto &p : ds.labels)
    labels.push_back({{"mu_a", p.mu_a()}, {"mu_s_prime", p.mu_s_prime()}, {"g", p.g()}, {"n", p.n()}});
  const nlohmann::json meta = {
      {"format", "tpsf-dataset/1"},
      {"t_start", g.t_start},
      {"dt", g.dt},
      {"n_bins", g.n_bins},
      {"n_samples", ds.size()},
      {"domain_tag", to_string(ds.domain)},
      {"seed", ds.seed},
      {"generator", ds.generator},
      {"labels", labels},
  };
  std::ofstream out(meta_path(prefix));
  if (!out)
    fail(ErrorCode::MissingFile, "cannot write '" + meta_path(prefix).string() + "'");
  // nlohmann writes the shortest round-trip form of each double, so labels reload exactly.
  out << meta.dump(1) << '\n';
}

LabeledDataset read_dataset(const std::filesystem::path &prefix) {
  const auto mpath = meta_path(prefix);
  std::ifstream in(mpath);
  if (!in)
    fail(ErrorCode::MissingFile, "cannot open '" + mpath.string() + "'");
  nlohmann::json meta;
  try {
    in >> meta;
  } catch (const nlohmann::json::exception &e) {
    fail(ErrorCode::BadHeader, "malformed dataset metadata '" + mpath.string() + "': " + e.what());
  }

  const NpyArray array = read_npy(npy_path(prefix));

  LabeledDataset ds;
  try {
    const TimeGrid g{meta.at("t_start").get<double>(), meta.at("dt").get<double>(),
                     meta.at("n_bins").get<std::size_t>()};
    if (array.cols != g.n_bins)
      fail(ErrorCode::ShapeMismatch, "array has " + std::to_string(array.cols) + " columns, metadata says " +
                                         std::to_string(g.n_bins));
    const auto &labels = meta.at("labels");
    if (labels.size() != array.rows)
      fail(ErrorCode::LabelMismatch, "array has " + std::to_string(array.rows) + " rows but metadata lists " +
                                         std::to_string(labels.size()) + " labels");
    ds.domain = domain_from_string(meta.at("domain_tag").get<std::string>());
    ds.seed = meta.value("seed", std::uint64_t{0});
    ds.generator = meta.value("generator", nlohmann::json::object());
    for (std::size_t r = 0; r < array.rows; ++r) {
      const auto first = array.data.begin() + static_cast<std::ptrdiff_t>(r * g.n_bins);
      ds.signals.emplace_back(std::vector<double>(first, first + static_cast<std::ptrdiff_t>(g.n_bins)), g);
      const auto &l = labels[r];
      ds.labels.emplace_back(l.at("mu_a").get<double>(), l.at("mu_s_prime").get<double>(), l.at("g").get<double>(),
                             l.at("n").get<double>());
    }
  } catch (const nlohmann::json::exception &e) {
    fail(ErrorCode::BadHeader, "malformed dataset metadata '" + mpath.string() + "': " + e.what());
  }
  ds.validate();
  return ds;
}

} // namespace tpsf
