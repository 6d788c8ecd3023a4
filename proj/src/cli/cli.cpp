#include <tpsf/cli/cli.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <tpsf/core/dataset.hpp>
#include <tpsf/core/error.hpp>
#include <tpsf/core/parallel.hpp>
#include <tpsf/nn/checkpoint.hpp>
#include <tpsf/pipeline/config.hpp>
#include <tpsf/pipeline/experiment.hpp>
#include <tpsf/pipeline/train.hpp>
#include <tpsf/sigproc/sigproc.hpp>
#include <tpsf/stats/stats.hpp>

namespace tpsf::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tpsf::pipeline;

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::string out;
  unsigned threads = 0;
  bool quiet = false;
};

struct Inputs {
  std::string dataset;
  std::string model;
  std::string fd_dataset;
};

int exit_code_for(ErrorCode code) {
  switch (code) {
  case ErrorCode::InvalidArgument:
  case ErrorCode::ConfigMismatch:
    return kBadConfig;
  case ErrorCode::MissingFile:
    return kMissingInput;
  default:
    return kFailure;
  }
}

void report_error(std::ostream &err, int code, std::string_view kind, std::string_view msg) {
  std::string escaped;
  for (char c : msg) {
    if (c == '"' || c == '\\')
      escaped += '\\';
    escaped += c == '\n' ? ' ' : c;
  }
  err << "error: code=" << code << " kind=" << kind << " msg=\"" << escaped << "\"\n";
}

json load_config_file(const std::string &path) {
  if (path.empty())
    return json::object();
  std::ifstream in(path);
  if (!in)
    fail(ErrorCode::MissingFile, "cannot open config file " + path);
  try {
    return json::parse(in);
  } catch (const json::exception &e) {
    fail(ErrorCode::InvalidArgument, "config file " + path + " is not valid JSON: " + e.what());
  }
}

json resolve(const json &defaults, const Common &c) { return resolve_config(defaults, load_config_file(c.config), c.sets); }

fs::path prepare_out(const Common &c) {
  const fs::path out(c.out);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out))
    fail(ErrorCode::InvalidArgument, "cannot create output directory " + c.out);
  return out;
}

void write_json(const fs::path &path, const json &j) {
  std::ofstream out(path);
  if (!out)
    fail(ErrorCode::InvalidArgument, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::ofstream open_csv(const fs::path &path) {
  std::ofstream out(path);
  if (!out)
    fail(ErrorCode::InvalidArgument, "cannot write " + path.string());
  out << std::setprecision(17);
  return out;
}

LabeledDataset load_dataset(const std::string &prefix, const char *flag) {
  if (prefix.empty())
    fail(ErrorCode::InvalidArgument, std::string(flag) + " is required");
  return read_dataset(prefix);
}

EpochCallback epoch_printer(const Common &c, std::ostream &err, const std::string &stage) {
  if (c.quiet)
    return {};
  return [&err, stage](const EpochRecord &e) {
    err << stage << " epoch " << e.epoch << " train " << e.train_loss << " val " << e.val_loss << " lr_lstm "
        << e.lr_lstm << " lr_fc " << e.lr_fc << '\n';
  };
}

/// Train-config defaults whose model section comes from a checkpoint, so that
/// only explicit model overrides can disagree with it.
json train_defaults_for(const nn::DualHeadModel &model) {
  json j = to_json(TrainConfig{});
  j["model"] = nn::to_json(model.config());
  return j;
}

void write_stage_outputs(const fs::path &out, const std::string &name, const StageResult &r, const TrainConfig &cfg,
                         const LabeledDataset &ds) {
  nn::save_checkpoint(out / "model.ckpt", r.model,
                      {{"stage", name}, {"config", to_json(cfg)}, {"dataset_seed", ds.seed},
                       {"dataset_domain", std::string(to_string(ds.domain))}});
  write_report_json(out / ("report_" + name + ".json"), r.report,
                    {{"stage", name}, {"best_epoch", r.fit.best_epoch}, {"n_test", r.split.test.size()}});
  write_scatter_csv(out / ("scatter_" + name + ".csv"), r.report);
  write_history_csv(out / ("history_" + name + ".csv"), r.fit);
}

int cmd_generate(Domain domain, const Common &c, std::ostream &out, std::ostream &err) {
  const auto cfg = generation_from_json(resolve(to_json(GenerationConfig::defaults(domain)), c), domain);
  cfg.validate();
  const auto dir = prepare_out(c);
  write_json(dir / "resolved_config.json", to_json(cfg));
  std::size_t last_pct = 101;
  const auto ds = generate_dataset(cfg, c.threads, [&](std::size_t done, std::size_t total) {
    const std::size_t pct = 100 * done / total;
    if (!c.quiet && pct / 10 != last_pct / 10) {
      err << "generated " << done << "/" << total << '\n';
      last_pct = pct;
    }
  });
  write_dataset(ds, dir / "ds");
  out << "wrote " << ds.size() << " " << to_string(domain) << " samples to " << (dir / "ds").string() << '\n';
  return kOk;
}

int cmd_analyze(const Common &c, const Inputs &in, std::ostream &out) {
  const json resolved =
      resolve({{"floor_ratio", sig::kDefaultFloorRatio}, {"slope_t_min", sig::kLateTimeStart}}, c);
  const double floor_ratio = resolved.at("floor_ratio").get<double>();
  const double t_min = resolved.at("slope_t_min").get<double>();
  require(floor_ratio > 0.0 && floor_ratio < 1.0, "floor_ratio must lie in (0, 1)");
  const auto ds = load_dataset(in.dataset, "--dataset");
  const auto dir = prepare_out(c);
  write_json(dir / "resolved_config.json", resolved);
  const std::string tag(to_string(ds.domain));

  const auto pca = stats::pca_explained_variance(ds, floor_ratio);
  {
    auto f = open_csv(dir / ("pca_" + tag + ".csv"));
    f << "component,explained_variance_ratio,cumulative\n";
    for (std::size_t k = 0; k < pca.explained_variance_ratio.size(); ++k)
      f << k + 1 << ',' << pca.explained_variance_ratio[k] << ',' << pca.cumulative[k] << '\n';
  }
  const auto grid = ds.grid();
  for (auto [which, name] : {std::pair{Param::MuA, "mu_a"}, std::pair{Param::MuSPrime, "mu_s_prime"}}) {
    const auto r = stats::temporal_pearson(ds, which, floor_ratio);
    auto f = open_csv(dir / ("pearson_" + tag + "_" + name + ".csv"));
    f << "bin,time_ns,r\n";
    for (std::size_t i = 0; i < r.size(); ++i)
      f << i << ',' << grid.bin_center(i) << ',' << r[i] << '\n';
  }
  {
    auto f = open_csv(dir / ("slopes_" + tag + ".csv"));
    f << "index,mu_a,mu_s_prime,slope,status\n";
    for (std::size_t i = 0; i < ds.size(); ++i) {
      f << i << ',' << ds.labels[i].mu_a() << ',' << ds.labels[i].mu_s_prime() << ',';
      try {
        f << sig::asymptotic_slope(ds.signals[i], t_min) << ",ok\n";
      } catch (const Error &e) {
        if (e.code() != ErrorCode::InsufficientData)
          throw;
        f << ",insufficient_data\n";
      }
    }
  }
  out << tag << ": " << pca.n_components_for(0.99) << " components reach 99% of the variance\n";
  return kOk;
}

int cmd_pretrain(const Common &c, const Inputs &in, std::ostream &out, std::ostream &err) {
  const auto cfg = train_from_json(resolve(to_json(TrainConfig{}), c));
  cfg.validate();
  const auto ds = load_dataset(in.dataset, "--dataset");
  const auto dir = prepare_out(c);
  write_json(dir / "resolved_config.json", to_json(cfg));
  const auto r = pretrain(ds, cfg, c.threads, epoch_printer(c, err, "pretrain"));
  write_stage_outputs(dir, "pretrain", r, cfg, ds);
  out << "pretrain: mu_a success " << r.report.mu_a.success << "%, mu_s_prime success " << r.report.mu_s_prime.success
      << "%\n";
  return kOk;
}

int cmd_preset(Preset preset, const Common &c, const Inputs &in, std::ostream &out, std::ostream &err) {
  std::optional<nn::Checkpoint> ck;
  if (preset != Preset::Scratch) {
    if (in.model.empty())
      fail(ErrorCode::InvalidArgument, "--model is required for " + std::string(to_string(preset)));
    ck = nn::load_checkpoint(in.model);
  }
  const auto cfg = train_from_json(resolve(ck ? train_defaults_for(ck->model) : to_json(TrainConfig{}), c));
  cfg.validate();
  const auto ds = load_dataset(in.dataset, "--dataset");
  const auto dir = prepare_out(c);
  write_json(dir / "resolved_config.json", to_json(cfg));
  const std::string name(to_string(preset));
  const auto r = run_preset(preset, ck ? &ck->model : nullptr, ds, cfg, c.threads, epoch_printer(c, err, name));
  write_stage_outputs(dir, name, r, cfg, ds);
  out << name << ": mu_a MRE " << r.report.mu_a.mre << "%, mu_s_prime MRE " << r.report.mu_s_prime.mre << "%\n";
  return kOk;
}

int cmd_evaluate(const Common &c, const Inputs &in, std::ostream &out) {
  if (in.model.empty())
    fail(ErrorCode::InvalidArgument, "--model is required");
  const auto ck = nn::load_checkpoint(in.model);
  json resolved = resolve([&] {
    json d = train_defaults_for(ck.model);
    d["rows"] = "test";
    return d;
  }(), c);
  const std::string rows_mode = resolved.at("rows").get<std::string>();
  require(rows_mode == "test" || rows_mode == "all", "rows must be 'test' or 'all'");
  resolved.erase("rows");
  const auto cfg = train_from_json(resolved);
  cfg.validate();
  if (!(ck.model.config() == cfg.model))
    fail(ErrorCode::ConfigMismatch, "checkpoint model " + nn::to_json(ck.model.config()).dump() +
                                        " does not match the configured model " + nn::to_json(cfg.model).dump());
  const auto ds = load_dataset(in.dataset, "--dataset");
  for (const auto &p : ds.labels)
    if (!cfg.model.range_a.contains(p.mu_a()) || !cfg.model.range_s.contains(p.mu_s_prime()))
      fail(ErrorCode::ConfigMismatch, "dataset labels fall outside the checkpoint's binning ranges");

  std::vector<std::size_t> rows;
  if (rows_mode == "test") {
    rows = split_dataset(ds.size(), cfg.split, cfg.seed).test;
  } else {
    rows.resize(ds.size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
  }
  const auto prepared = preprocess(ds, rows, false, cfg.preprocess, cfg.model, cfg.seed);
  const auto report = evaluate(ck.model, prepared, cfg.decode, c.threads);

  const auto dir = prepare_out(c);
  write_json(dir / "resolved_config.json", [&] {
    json j = to_json(cfg);
    j["rows"] = rows_mode;
    return j;
  }());
  write_report_json(dir / "report_evaluate.json", report,
                    {{"stage", "evaluate"}, {"rows", rows_mode}, {"n", rows.size()},
                     {"dataset_domain", std::string(to_string(ds.domain))},
                     {"model_hash", nn::model_hash(ck.model)}});
  write_scatter_csv(dir / "scatter_evaluate.csv", report);
  out << "evaluate: mu_a MRE " << report.mu_a.mre << "%, mu_s_prime MRE " << report.mu_s_prime.mre << "%\n";
  return kOk;
}

int cmd_matrix(const Common &c, const Inputs &in, std::ostream &out, std::ostream &err) {
  const json resolved = resolve(matrix_defaults(), c);
  const auto entries = matrix_from_json(resolved);
  const auto mc = load_dataset(in.dataset, "--dataset");
  const auto dir = prepare_out(c);
  write_json(dir / "resolved_config.json", resolved);
  // Without a checkpoint or FD data, direct and finetune entries fail individually.
  std::optional<nn::DualHeadModel> pretrained;
  if (!in.model.empty()) {
    pretrained = nn::load_checkpoint(in.model).model;
  } else if (!in.fd_dataset.empty()) {
    const auto base = train_from_json(resolved.at("base"));
    const auto fd = read_dataset(in.fd_dataset);
    const auto r = pretrain(fd, base, c.threads, epoch_printer(c, err, "pretrain"));
    write_stage_outputs(dir, "pretrain", r, base, fd);
    pretrained = r.model;
  }
  const auto rows = run_experiment_matrix(entries, pretrained ? &*pretrained : nullptr, mc, c.threads,
                                          [&](const MatrixRow &row) {
                                            if (!c.quiet)
                                              err << "matrix " << row.entry.name << ": "
                                                  << (row.ok ? "ok" : "failed: " + row.error) << '\n';
                                          });
  write_matrix_csv(dir / "matrix.csv", rows);
  std::size_t ok = 0;
  for (const auto &row : rows) {
    if (!row.ok)
      continue;
    ++ok;
    write_report_json(dir / ("report_" + row.entry.name + ".json"), row.report,
                      {{"stage", std::string(to_string(row.entry.preset))}, {"best_epoch", row.best_epoch}});
    write_scatter_csv(dir / ("scatter_" + row.entry.name + ".csv"), row.report);
  }
  out << "matrix: " << ok << "/" << rows.size() << " entries succeeded\n";
  return kOk;
}

} // namespace

int run(int argc, const char *const *argv, std::ostream &out, std::ostream &err) {
  CLI::App app{"Time-resolved photon transport datasets, analysis and transfer-learning experiments.", "tpsf"};
  app.require_subcommand(1);
  Common common;
  common.threads = default_threads();
  Inputs inputs;

  auto add_common = [&](CLI::App *sub, bool needs_dataset, bool needs_model) {
    sub->add_option("-c,--config", common.config, "JSON config file layered over the defaults");
    sub->add_option("--set", common.sets, "Override, dotted.key=value (repeatable, applied after the file)");
    sub->add_option("-o,--out", common.out, "Output directory")->required();
    sub->add_option("--threads", common.threads,
                    "Worker threads (default: TPSF_THREADS or the hardware concurrency)")
        ->check(CLI::PositiveNumber);
    sub->add_flag("-q,--quiet", common.quiet, "Suppress progress output");
    if (needs_dataset)
      sub->add_option("--dataset", inputs.dataset, "Dataset prefix (<prefix>.npy + <prefix>.meta.json)")->required();
    if (needs_model)
      sub->add_option("--model", inputs.model, "Checkpoint file")->required();
  };

  auto *gen_fd = app.add_subcommand("gen-fd", "Render a deterministic-solver dataset");
  add_common(gen_fd, false, false);
  auto *gen_mc = app.add_subcommand("gen-mc", "Render a Monte Carlo dataset");
  add_common(gen_mc, false, false);
  auto *analyze = app.add_subcommand("analyze", "PCA, temporal Pearson correlation and late-time slopes");
  add_common(analyze, true, false);
  auto *pre = app.add_subcommand("pretrain", "Train on an FD dataset");
  add_common(pre, true, false);
  auto *ft = app.add_subcommand("finetune", "Adapt a pretrained checkpoint on an MC dataset");
  add_common(ft, true, true);
  auto *scratch = app.add_subcommand("scratch", "Train a fresh model on an MC dataset");
  add_common(scratch, true, false);
  auto *eval = app.add_subcommand("evaluate", "Evaluate a checkpoint (rows=test or rows=all)");
  add_common(eval, true, true);
  auto *matrix = app.add_subcommand("matrix", "Run an experiment matrix on an MC dataset");
  add_common(matrix, true, false);
  matrix->add_option("--model", inputs.model, "Pretrained checkpoint for direct and finetune entries");
  matrix->add_option("--fd-dataset", inputs.fd_dataset, "FD dataset to pretrain on when no --model is given");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp &) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError &e) {
    report_error(err, kUsage, "usage", e.what());
    return kUsage;
  }

  try {
    if (gen_fd->parsed())
      return cmd_generate(Domain::FD, common, out, err);
    if (gen_mc->parsed())
      return cmd_generate(Domain::MC, common, out, err);
    if (analyze->parsed())
      return cmd_analyze(common, inputs, out);
    if (pre->parsed())
      return cmd_pretrain(common, inputs, out, err);
    if (ft->parsed())
      return cmd_preset(Preset::Finetune, common, inputs, out, err);
    if (scratch->parsed())
      return cmd_preset(Preset::Scratch, common, inputs, out, err);
    if (eval->parsed())
      return cmd_evaluate(common, inputs, out);
    if (matrix->parsed())
      return cmd_matrix(common, inputs, out, err);
  } catch (const Error &e) {
    const int code = exit_code_for(e.code());
    report_error(err, code, to_string(e.code()), e.what());
    return code;
  } catch (const std::exception &e) {
    report_error(err, kFailure, "internal", e.what());
    return kFailure;
  }
  report_error(err, kUsage, "usage", "no subcommand given");
  return kUsage;
}

} // namespace tpsf::cli
