#include <tpsf/pipeline/config.hpp>

#include <cmath>

#include <tpsf/core/error.hpp>

namespace tpsf::pipeline {
namespace {

using nlohmann::json;

/// Non-negative integer field. nlohmann would silently wrap -5 into a huge
/// unsigned value, so the sign is checked on the JSON value itself.
std::uint64_t count_at(const json &j, const char *key) {
  const auto &v = j.at(key);
  if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0))
    fail(ErrorCode::InvalidArgument, std::string("'") + key + "' must be a non-negative integer, got " + v.dump());
  return v.get<std::uint64_t>();
}

json range_json(const ParamRange &r) { return json::array({r.lo, r.hi}); }

ParamRange range_from(const json &j) {
  require(j.is_array() && j.size() == 2, "a range must be a two-element array [lo, hi]");
  return {j[0].get<double>(), j[1].get<double>()};
}

fd::Point2 point_from(const json &j) {
  require(j.is_array() && j.size() == 2, "a position must be a two-element array [x, y]");
  return {j[0].get<double>(), j[1].get<double>()};
}

std::string_view decode_name(nn::DecodeMode m) {
  return m == nn::DecodeMode::ArgmaxCenter ? "argmax_center" : "expectation";
}

void merge_strict(json &base, const json &patch, const std::string &path) {
  require(patch.is_object(), "configuration " + (path.empty() ? std::string("root") : "'" + path + "'") +
                                 " must be a JSON object");
  for (const auto &[key, value] : patch.items()) {
    const std::string here = path.empty() ? key : path + "." + key;
    require(base.contains(key), "unknown configuration key '" + here + "'");
    if (base[key].is_object())
      merge_strict(base[key], value, here);
    else
      base[key] = value;
  }
}

// Runs a parser and reports JSON type errors as configuration errors.
template <typename F> auto parse_guard(F &&fn) {
  try {
    return fn();
  } catch (const nlohmann::json::exception &e) {
    fail(ErrorCode::InvalidArgument, std::string("bad configuration value: ") + e.what());
  }
}

} // namespace

GenerationConfig GenerationConfig::defaults(Domain domain) {
  GenerationConfig c;
  c.domain = domain;
  c.n_samples = domain == Domain::FD ? 1000 : 300;
  return c;
}

void GenerationConfig::validate() const {
  require(n_samples >= 1, "n_samples must be at least 1");
  range_a.validate();
  range_s.validate();
  require(g >= 0.0 && g < 1.0, "g must lie in [0, 1)");
  require(n >= 1.0, "refractive index must be at least 1");
  if (domain == Domain::FD)
    fd.validate();
  else
    mc.validate();
}

void SplitFractions::validate() const {
  require(train > 0.0 && val > 0.0 && test > 0.0, "split fractions must be positive");
  require(std::abs(train + val + test - 1.0) < 1e-9, "split fractions must sum to 1");
}

void TrainConfig::validate() const {
  require(epochs >= 1, "epochs must be at least 1");
  require(batch_size >= 1, "batch_size must be at least 1");
  require(lr >= 0.0 && lr_lstm >= 0.0 && lr_fc >= 0.0, "learning rates must be non-negative");
  require(weight_a > 0.0, "weight_a must be positive");
  require(scheduler_factor > 0.0 && scheduler_factor < 1.0, "scheduler_factor must lie in (0, 1)");
  require(scheduler_patience >= 1, "scheduler_patience must be at least 1");
  require(preprocess.noise_alpha >= 0.0, "noise_alpha must be non-negative");
  require(preprocess.floor_ratio > 0.0 && preprocess.floor_ratio < 1.0, "floor_ratio must lie in (0, 1)");
  preprocess.savgol.validate();
  split.validate();
  model.validate();
}

json to_json(const GenerationConfig &c) {
  json j = {{"domain", to_string(c.domain)},
            {"n_samples", c.n_samples},
            {"sampling", to_string(c.sampling)},
            {"seed", c.seed},
            {"range_a", range_json(c.range_a)},
            {"range_s", range_json(c.range_s)},
            {"g", c.g},
            {"n", c.n}};
  if (c.domain == Domain::FD) {
    const auto &f = c.fd;
    j.update({{"n_angles", f.n_angles},
              {"nx", f.nx},
              {"ny", f.ny},
              {"lx", f.lx},
              {"ly", f.ly},
              {"cfl_fraction", f.cfl_fraction},
              {"t_end", f.t_end},
              {"time_step", f.time_step},
              {"source_pos", {f.source_pos.x, f.source_pos.y}},
              {"detector_pos", {f.detector_pos.x, f.detector_pos.y}},
              {"separation", f.separation},
              {"detector_width", f.detector_width},
              {"pulse_fwhm", f.pulse_fwhm},
              {"pulse_center", f.pulse_center},
              {"t_start", f.output.t_start},
              {"dt", f.output.dt},
              {"n_bins", f.output.n_bins},
              {"isotropic_similarity", f.isotropic_similarity},
              {"boundary", f.boundary == fd::Boundary::Vacuum ? "vacuum" : "periodic"}});
  } else {
    const auto &m = c.mc;
    j.update({{"n_photons", m.n_photons},
              {"cyl_radius", m.cyl_radius},
              {"cyl_height", m.cyl_height},
              {"fiber_radius", m.fiber_radius},
              {"cone_half_angle_deg", m.cone_half_angle_deg},
              {"src_det_separation", m.src_det_separation},
              {"detector_radius", m.detector_radius},
              {"w_min", m.w_min},
              {"p_survive", m.p_survive},
              {"roulette", m.roulette},
              {"t_window", m.t_window},
              {"n_bins", m.n_bins},
              {"pulse_fwhm", m.pulse_fwhm},
              {"pulse_center", m.pulse_center},
              {"ring_detector", m.ring_detector},
              {"horizon_cut", m.horizon_cut},
              {"max_scatter", m.max_scatter},
              {"chunk", m.chunk}});
  }
  return j;
}

GenerationConfig generation_from_json(const json &in, Domain domain) {
  const json j = resolve_config(to_json(GenerationConfig::defaults(domain)), in, {});
  return parse_guard([&] {
    require(domain_from_string(j.at("domain").get<std::string>()) == domain,
            "configuration is for the " + j.at("domain").get<std::string>() + " domain");
    GenerationConfig c = GenerationConfig::defaults(domain);
    c.n_samples = count_at(j, "n_samples");
    c.sampling = sampling_mode_from_string(j.at("sampling").get<std::string>());
    c.seed = count_at(j, "seed");
    c.range_a = range_from(j.at("range_a"));
    c.range_s = range_from(j.at("range_s"));
    c.g = j.at("g").get<double>();
    c.n = j.at("n").get<double>();
    if (domain == Domain::FD) {
      auto &f = c.fd;
      f.n_angles = count_at(j, "n_angles");
      f.nx = count_at(j, "nx");
      f.ny = count_at(j, "ny");
      f.lx = j.at("lx").get<double>();
      f.ly = j.at("ly").get<double>();
      f.cfl_fraction = j.at("cfl_fraction").get<double>();
      f.t_end = j.at("t_end").get<double>();
      f.time_step = j.at("time_step").get<double>();
      f.source_pos = point_from(j.at("source_pos"));
      f.detector_pos = point_from(j.at("detector_pos"));
      f.separation = j.at("separation").get<double>();
      f.detector_width = j.at("detector_width").get<double>();
      f.pulse_fwhm = j.at("pulse_fwhm").get<double>();
      f.pulse_center = j.at("pulse_center").get<double>();
      f.output = {j.at("t_start").get<double>(), j.at("dt").get<double>(), count_at(j, "n_bins")};
      f.isotropic_similarity = j.at("isotropic_similarity").get<bool>();
      const auto b = j.at("boundary").get<std::string>();
      require(b == "vacuum" || b == "periodic", "boundary must be 'vacuum' or 'periodic'");
      f.boundary = b == "vacuum" ? fd::Boundary::Vacuum : fd::Boundary::Periodic;
    } else {
      auto &m = c.mc;
      m.n_photons = count_at(j, "n_photons");
      m.cyl_radius = j.at("cyl_radius").get<double>();
      m.cyl_height = j.at("cyl_height").get<double>();
      m.fiber_radius = j.at("fiber_radius").get<double>();
      m.cone_half_angle_deg = j.at("cone_half_angle_deg").get<double>();
      m.src_det_separation = j.at("src_det_separation").get<double>();
      m.detector_radius = j.at("detector_radius").get<double>();
      m.w_min = j.at("w_min").get<double>();
      m.p_survive = j.at("p_survive").get<double>();
      m.roulette = j.at("roulette").get<bool>();
      m.t_window = j.at("t_window").get<double>();
      m.n_bins = count_at(j, "n_bins");
      m.pulse_fwhm = j.at("pulse_fwhm").get<double>();
      m.pulse_center = j.at("pulse_center").get<double>();
      m.ring_detector = j.at("ring_detector").get<bool>();
      m.horizon_cut = j.at("horizon_cut").get<bool>();
      m.max_scatter = count_at(j, "max_scatter");
      m.chunk = count_at(j, "chunk");
    }
    c.validate();
    return c;
  });
}

json to_json(const TrainConfig &c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"lr_lstm", c.lr_lstm},
          {"lr_fc", c.lr_fc},
          {"freeze_lstm", c.freeze_lstm},
          {"weight_a", c.weight_a},
          {"scheduler_patience", c.scheduler_patience},
          {"scheduler_factor", c.scheduler_factor},
          {"early_stop_patience", c.early_stop_patience},
          {"seed", c.seed},
          {"split", {{"train", c.split.train}, {"val", c.split.val}, {"test", c.split.test}}},
          {"noise_alpha", c.preprocess.noise_alpha},
          {"savgol", {{"window", c.preprocess.savgol.window}, {"poly_order", c.preprocess.savgol.poly_order}}},
          {"floor_ratio", c.preprocess.floor_ratio},
          {"decode", decode_name(c.decode)},
          {"model", nn::to_json(c.model)}};
}

TrainConfig train_from_json(const json &in) {
  const json j = resolve_config(to_json(TrainConfig{}), in, {});
  return parse_guard([&] {
    TrainConfig c;
    c.epochs = count_at(j, "epochs");
    c.batch_size = count_at(j, "batch_size");
    c.lr = j.at("lr").get<double>();
    c.lr_lstm = j.at("lr_lstm").get<double>();
    c.lr_fc = j.at("lr_fc").get<double>();
    c.freeze_lstm = j.at("freeze_lstm").get<bool>();
    c.weight_a = j.at("weight_a").get<double>();
    c.scheduler_patience = count_at(j, "scheduler_patience");
    c.scheduler_factor = j.at("scheduler_factor").get<double>();
    c.early_stop_patience = count_at(j, "early_stop_patience");
    c.seed = count_at(j, "seed");
    const auto &s = j.at("split");
    c.split = {s.at("train").get<double>(), s.at("val").get<double>(), s.at("test").get<double>()};
    c.preprocess.noise_alpha = j.at("noise_alpha").get<double>();
    c.preprocess.savgol = {count_at(j.at("savgol"), "window"),
                           count_at(j.at("savgol"), "poly_order")};
    c.preprocess.floor_ratio = j.at("floor_ratio").get<double>();
    c.decode = nn::decode_mode_from_string(j.at("decode").get<std::string>());
    c.model = nn::model_config_from_json(j.at("model"));
    c.validate();
    return c;
  });
}

json resolve_config(json defaults, const json &file, const std::vector<std::string> &overrides) {
  if (!file.is_null())
    merge_strict(defaults, file, "");
  for (const auto &o : overrides)
    apply_override(defaults, o);
  return defaults;
}

void apply_override(json &j, const std::string &assignment) {
  const auto eq = assignment.find('=');
  require(eq != std::string::npos && eq > 0, "override '" + assignment + "' must look like key=value");
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);

  json *node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    require(node->is_object() && node->contains(key), "unknown configuration key '" + path + "'");
    node = &(*node)[key];
    if (dot == std::string::npos)
      break;
    start = dot + 1;
  }
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded())
    value = text;
  require(!node->is_object() || value.is_object(), "configuration key '" + path + "' expects an object");
  if (node->is_object())
    merge_strict(*node, value, path);
  else
    *node = value;
}

} // namespace tpsf::pipeline
