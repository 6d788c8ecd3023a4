#include <tpsf/pipeline/experiment.hpp>

#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <tpsf/core/error.hpp>
#include <tpsf/core/rng.hpp>

namespace tpsf::pipeline {
namespace {

constexpr std::uint64_t kInitKey = 0x494E4954;

std::ofstream open_out(const std::filesystem::path &path) {
  std::ofstream out(path);
  if (!out)
    fail(ErrorCode::MissingFile, "cannot write " + path.string());
  out << std::setprecision(17);
  return out;
}

std::string csv_quote(const std::string &s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"')
      out += '"';
    out += c;
  }
  return out + "\"";
}

void require_compatible(const nn::DualHeadModel &model, const nn::ModelConfig &cfg) {
  if (!(model.config() == cfg))
    fail(ErrorCode::ConfigMismatch, "checkpoint model " + nn::to_json(model.config()).dump() +
                                        " does not match the configured model " + nn::to_json(cfg).dump());
}

} // namespace

std::string_view to_string(Preset p) {
  switch (p) {
  case Preset::Direct:
    return "direct";
  case Preset::Finetune:
    return "finetune";
  case Preset::Scratch:
    return "scratch";
  }
  return "?";
}

Preset preset_from_string(std::string_view s) {
  if (s == "direct")
    return Preset::Direct;
  if (s == "finetune")
    return Preset::Finetune;
  if (s == "scratch")
    return Preset::Scratch;
  fail(ErrorCode::InvalidArgument, "unknown preset '" + std::string(s) + "'");
}

std::uint64_t init_seed(const TrainConfig &cfg) { return derive_seed(cfg.seed, kInitKey); }

StageResult pretrain(const LabeledDataset &fd, const TrainConfig &cfg, unsigned threads,
                     const EpochCallback &on_epoch) {
  cfg.validate();
  require(fd.domain == Domain::FD, "pretraining expects an FD dataset");
  StageResult r{nn::DualHeadModel(cfg.model, init_seed(cfg)), split_dataset(fd.size(), cfg.split, cfg.seed), {}, {}};
  const auto train = preprocess(fd, r.split.train, true, cfg.preprocess, cfg.model, cfg.seed);
  const auto val = preprocess(fd, r.split.val, false, cfg.preprocess, cfg.model, cfg.seed);
  const auto test = preprocess(fd, r.split.test, false, cfg.preprocess, cfg.model, cfg.seed);
  auto opts = train_options(cfg, threads);
  opts.on_epoch = on_epoch;
  r.fit = fit(r.model, train, val, opts);
  audit_no_leakage(r.split, train, val, test, r.fit);
  r.report = evaluate(r.model, test, cfg.decode, threads);
  return r;
}

StageResult run_preset(Preset preset, const nn::DualHeadModel *pretrained, const LabeledDataset &mc,
                       const TrainConfig &cfg, unsigned threads, const EpochCallback &on_epoch) {
  cfg.validate();
  require(mc.domain == Domain::MC, "the " + std::string(to_string(preset)) + " preset expects an MC dataset");
  if (preset != Preset::Scratch) {
    if (pretrained == nullptr)
      fail(ErrorCode::MissingFile, "the " + std::string(to_string(preset)) + " preset needs a pretrained model");
    require_compatible(*pretrained, cfg.model);
  }
  StageResult r{preset == Preset::Scratch ? nn::DualHeadModel(cfg.model, init_seed(cfg)) : *pretrained,
                split_dataset(mc.size(), cfg.split, cfg.seed),
                {},
                {}};
  const auto test = preprocess(mc, r.split.test, false, cfg.preprocess, cfg.model, cfg.seed);
  if (preset != Preset::Direct) {
    const auto train = preprocess(mc, r.split.train, true, cfg.preprocess, cfg.model, cfg.seed);
    const auto val = preprocess(mc, r.split.val, false, cfg.preprocess, cfg.model, cfg.seed);
    auto opts = preset == Preset::Scratch ? train_options(cfg, threads) : finetune_options(cfg, threads);
    opts.on_epoch = on_epoch;
    r.fit = fit(r.model, train, val, opts);
    audit_no_leakage(r.split, train, val, test, r.fit);
  }
  r.report = evaluate(r.model, test, cfg.decode, threads);
  return r;
}

void audit_no_leakage(const Split &split, const Prepared &train, const Prepared &val, const Prepared &test,
                      const FitResult &fit) {
  const std::set<std::size_t> tr(split.train.begin(), split.train.end());
  std::set<std::size_t> seen;
  for (const auto *part : {&split.train, &split.val, &split.test})
    for (auto i : *part)
      if (!seen.insert(i).second)
        fail(ErrorCode::InvalidArgument, "row " + std::to_string(i) + " appears in more than one split");
  for (const auto *p : {&val, &test})
    for (bool a : p->augmented)
      if (a)
        fail(ErrorCode::InvalidArgument, "augmented sample outside the training split");
  for (auto col : fit.visited)
    if (col >= train.size() || !tr.count(train.source[col]))
      fail(ErrorCode::InvalidArgument, "a training batch used a row outside the train split");
}

nlohmann::json matrix_defaults() {
  return {{"base", to_json(TrainConfig{})}, {"entries", nlohmann::json::array()}};
}

std::vector<MatrixEntry> matrix_from_json(const nlohmann::json &j) {
  require(j.is_object(), "matrix configuration must be an object");
  for (const auto &[key, value] : j.items())
    require(key == "base" || key == "entries", "unknown matrix configuration key '" + key + "'");
  const nlohmann::json base = resolve_config(to_json(TrainConfig{}), j.value("base", nlohmann::json::object()), {});
  const auto &entries = j.value("entries", nlohmann::json::array());
  require(entries.is_array() && !entries.empty(), "matrix needs a non-empty 'entries' array");
  std::vector<MatrixEntry> out;
  std::set<std::string> names;
  for (const auto &e : entries) {
    require(e.is_object() && e.contains("name") && e.contains("preset"), "matrix entries need 'name' and 'preset'");
    for (const auto &[key, value] : e.items())
      require(key == "name" || key == "preset" || key == "set", "unknown matrix entry key '" + key + "'");
    MatrixEntry m;
    m.name = e.at("name").get<std::string>();
    require(!m.name.empty() && names.insert(m.name).second, "matrix entry names must be unique and non-empty");
    m.preset = preset_from_string(e.at("preset").get<std::string>());
    m.config = train_from_json(resolve_config(base, e.value("set", nlohmann::json::object()), {}));
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<MatrixRow> run_experiment_matrix(const std::vector<MatrixEntry> &entries,
                                             const nn::DualHeadModel *pretrained, const LabeledDataset &mc,
                                             unsigned threads, const std::function<void(const MatrixRow &)> &on_row) {
  std::vector<MatrixRow> rows;
  for (const auto &e : entries) {
    MatrixRow row;
    row.entry = e;
    try {
      const auto r = run_preset(e.preset, pretrained, mc, e.config, threads);
      row.ok = true;
      row.report = r.report;
      row.model_hash = nn::model_hash(r.model);
      row.best_epoch = r.fit.best_epoch;
    } catch (const std::exception &ex) {
      row.error = ex.what();
    }
    if (on_row)
      on_row(row);
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_matrix_csv(const std::filesystem::path &path, const std::vector<MatrixRow> &rows) {
  auto out = open_out(path);
  out << "name,preset,status,seed,epochs,lr,lr_lstm,lr_fc,freeze_lstm,weight_a,noise_alpha,hidden_size,num_layers,"
         "dropout,mre_mu_a,bias_mu_a,std_mu_a,success_mu_a,mre_mu_s_prime,bias_mu_s_prime,std_mu_s_prime,"
         "success_mu_s_prime,best_epoch,model_hash,error,config\n";
  for (const auto &r : rows) {
    const auto &c = r.entry.config;
    out << r.entry.name << ',' << to_string(r.entry.preset) << ',' << (r.ok ? "ok" : "failed") << ',' << c.seed
        << ',' << c.epochs << ',' << c.lr << ',' << c.lr_lstm << ',' << c.lr_fc << ',' << c.freeze_lstm << ','
        << c.weight_a << ',' << c.preprocess.noise_alpha << ',' << c.model.hidden_size << ','
        << c.model.num_layers << ',' << c.model.dropout << ',';
    if (r.ok) {
      for (const auto *m : {&r.report.mu_a, &r.report.mu_s_prime})
        out << m->mre << ',' << m->bias << ',' << m->std << ',' << m->success << ',';
      out << r.best_epoch << ',' << std::hex << std::setw(16) << std::setfill('0') << r.model_hash << std::dec
          << std::setfill(' ') << ',';
    } else {
      out << ",,,,,,,,,,";
    }
    out << csv_quote(r.error) << ',' << csv_quote(to_json(c).dump()) << '\n';
  }
}

void write_report_json(const std::filesystem::path &path, const EvalReport &report, const nlohmann::json &extra) {
  nlohmann::json j = to_json(report);
  if (extra.is_object())
    j.update(extra);
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

void write_scatter_csv(const std::filesystem::path &path, const EvalReport &r) {
  auto out = open_out(path);
  out << "true_mu_a,pred_mu_a,true_mu_s_prime,pred_mu_s_prime\n";
  for (std::size_t i = 0; i < r.true_a.size(); ++i)
    out << r.true_a[i] << ',' << r.pred_a[i] << ',' << r.true_s[i] << ',' << r.pred_s[i] << '\n';
}

void write_history_csv(const std::filesystem::path &path, const FitResult &fit) {
  auto out = open_out(path);
  out << "epoch,train_loss,val_loss,lr_lstm,lr_fc\n";
  for (const auto &h : fit.history)
    out << h.epoch << ',' << h.train_loss << ',' << h.val_loss << ',' << h.lr_lstm << ',' << h.lr_fc << '\n';
}

} // namespace tpsf::pipeline
