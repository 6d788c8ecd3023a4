#include <doctest.h>

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include <tpsf/core/error.hpp>
#include <tpsf/nn/checkpoint.hpp>
#include <tpsf/pipeline/experiment.hpp>
#include <tpsf/sigproc/sigproc.hpp>

namespace fs = std::filesystem;
using namespace tpsf;
using namespace tpsf::pipeline;

namespace {

ErrorCode code_of(auto &&fn) {
  try {
    fn();
  } catch (const Error &e) {
    return e.code();
  }
  FAIL("expected an exception");
  return ErrorCode::InvalidArgument;
}

// Coarse 50-bin generators keep the pipeline tests fast.
GenerationConfig small_fd(std::size_t n) {
  auto c = GenerationConfig::defaults(Domain::FD);
  c.n_samples = n;
  c.fd.nx = 31;
  c.fd.ny = 16;
  c.fd.n_angles = 8;
  c.fd.output = {0.0, 0.02, 50};
  return c;
}

GenerationConfig small_mc(std::size_t n) {
  auto c = GenerationConfig::defaults(Domain::MC);
  c.n_samples = n;
  c.mc.n_photons = 3000;
  c.mc.n_bins = 50;
  return c;
}

TrainConfig small_train() {
  TrainConfig c;
  c.epochs = 3;
  c.batch_size = 8;
  c.model.input_len = 50;
  c.model.hidden_size = 6;
  c.model.head_hidden = 8;
  c.model.n_bins_a = 8;
  c.model.n_bins_s = 8;
  return c;
}

const LabeledDataset &fd_data() {
  static const LabeledDataset ds = generate_dataset(small_fd(40), 1);
  return ds;
}

const LabeledDataset &mc_data() {
  static const LabeledDataset ds = generate_dataset(small_mc(30), 1);
  return ds;
}

bool same_params(const nn::DualHeadModel &a, const nn::DualHeadModel &b) {
  return a.params().size() == b.params().size() &&
         std::memcmp(a.params().data(), b.params().data(), a.params().size() * sizeof(double)) == 0;
}

} // namespace

TEST_CASE("split sizes, partition and determinism") {
  const auto s = split_dataset(10, {}, 3);
  CHECK(s.train.size() == 8);
  CHECK(s.val.size() == 1);
  CHECK(s.test.size() == 1);

  const auto big = split_dataset(1000, {}, 5);
  CHECK(big.train.size() == 800);
  CHECK(big.val.size() == 100);
  CHECK(big.test.size() == 100);
  std::vector<std::size_t> all;
  for (const auto *p : {&big.train, &big.val, &big.test})
    all.insert(all.end(), p->begin(), p->end());
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> expect(1000);
  std::iota(expect.begin(), expect.end(), std::size_t{0});
  CHECK(all == expect);

  const auto again = split_dataset(1000, {}, 5);
  CHECK(again.train == big.train);
  CHECK(again.test == big.test);
  CHECK(split_dataset(1000, {}, 6).train != big.train);

  CHECK(code_of([] { split_dataset(3, {}, 1); }) == ErrorCode::InsufficientData);
  CHECK_THROWS_AS(split_dataset(100, {0.5, 0.5, 0.5}, 1), Error);
  CHECK_THROWS_AS(split_dataset(100, {0.9, 0.1, 0.0}, 1), Error);
}

TEST_CASE("config layering and strict keys") {
  const auto defaults = to_json(TrainConfig{});
  nlohmann::json file = {{"epochs", 7}, {"model", {{"hidden_size", 16}}}};
  const auto j = resolve_config(defaults, file, {"epochs=9", "model.dropout=0.1", "decode=expectation"});
  const auto c = train_from_json(j);
  CHECK(c.epochs == 9);
  CHECK(c.model.hidden_size == 16);
  CHECK(c.model.num_layers == 2);
  CHECK(c.model.dropout == 0.1);
  CHECK(c.decode == nn::DecodeMode::Expectation);
  CHECK(to_json(c) == j);
  CHECK(train_from_json(to_json(c)).model == c.model);

  CHECK_THROWS_AS(resolve_config(defaults, {{"epoch", 3}}, {}), Error);
  CHECK_THROWS_AS(resolve_config(defaults, nullptr, {"model.hidden=3"}), Error);
  CHECK_THROWS_AS(resolve_config(defaults, nullptr, {"novalue"}), Error);
  CHECK_THROWS_AS(train_from_json({{"epochs", "many"}}), Error);
  CHECK_THROWS_AS(train_from_json({{"split", {{"train", 0.9}}}}), Error);

  for (Domain d : {Domain::FD, Domain::MC}) {
    auto g = GenerationConfig::defaults(d);
    g.n_samples = 17;
    g.seed = 99;
    const auto echo = to_json(g);
    CHECK(to_json(generation_from_json(echo, d)) == echo);
  }
  CHECK(GenerationConfig::defaults(Domain::FD).n_samples == 1000);
  CHECK(GenerationConfig::defaults(Domain::MC).n_samples == 300);
  CHECK(GenerationConfig::defaults(Domain::MC).mc.n_photons == 100000);
  const auto mc = generation_from_json(resolve_config(to_json(GenerationConfig::defaults(Domain::MC)), nullptr,
                                                      {"n_photons=2500"}),
                                       Domain::MC);
  CHECK(mc.mc.n_photons == 2500);
  CHECK_THROWS_AS(generation_from_json(to_json(GenerationConfig::defaults(Domain::FD)), Domain::MC), Error);
}

TEST_CASE("dataset generation is thread-count invariant") {
  const auto fd1 = generate_dataset(small_fd(3), 1);
  const auto fd3 = generate_dataset(small_fd(3), 3);
  CHECK(fd1.signals == fd3.signals);
  CHECK(fd1.labels == fd3.labels);
  auto mcfg = small_mc(3);
  mcfg.mc.n_photons = 1000;
  const auto mc1 = generate_dataset(mcfg, 1);
  const auto mc3 = generate_dataset(mcfg, 3);
  CHECK(mc1.signals == mc3.signals);
  CHECK(mc1.domain == Domain::MC);
  // Each sample draws its own photon stream.
  CHECK(mc1.signals[0] != generate_dataset([&] {
          auto c = mcfg;
          c.seed = 2;
          return c;
        }(), 1).signals[0]);
  CHECK(to_json(generation_from_json(mc1.generator, Domain::MC)) == to_json(mcfg));

  // A row slice reproduces the same rows of the full run.
  const auto tail = generate_rows(mcfg, 1, 3, 2);
  REQUIRE(tail.size() == 2);
  CHECK(tail.signals[0] == mc1.signals[1]);
  CHECK(tail.signals[1] == mc1.signals[2]);
  CHECK(tail.labels[1] == mc1.labels[2]);
  CHECK_THROWS_AS(generate_rows(mcfg, 2, 2, 1), Error);
  CHECK_THROWS_AS(generate_rows(mcfg, 0, 4, 1), Error);
}

TEST_CASE("preprocess branches") {
  const auto cfg = small_train();
  const auto &mc = mc_data();
  const std::vector<std::size_t> rows{4, 1, 7};
  const auto train = preprocess(mc, rows, true, cfg.preprocess, cfg.model, 5);
  REQUIRE(train.size() == 6);
  for (std::size_t k = 0; k < 6; ++k) {
    CHECK(train.source[k] == rows[k / 2]);
    CHECK(train.augmented[k] == (k % 2 == 1));
  }
  const auto val = preprocess(mc, rows, false, cfg.preprocess, cfg.model, 5);
  REQUIRE(val.size() == 3);
  CHECK(std::none_of(val.augmented.begin(), val.augmented.end(), [](bool a) { return a; }));
  const auto filtered = sig::normalize_for_network(sig::savgol_filter(mc.signals[4], cfg.preprocess.savgol));
  for (std::size_t i = 0; i < filtered.size(); ++i) {
    CHECK(val.inputs(Eigen::Index(i), 0) == filtered[i]);
    CHECK(train.inputs(Eigen::Index(i), 0) == filtered[i]);
  }
  CHECK(train.inputs.col(1) != train.inputs.col(0));
  CHECK(preprocess(mc, rows, true, cfg.preprocess, cfg.model, 5).inputs == train.inputs);

  const auto &fd = fd_data();
  const auto f = preprocess(fd, rows, true, cfg.preprocess, cfg.model, 5);
  REQUIRE(f.size() == 3);
  for (std::size_t k = 0; k < 3; ++k) {
    const auto plain = sig::normalize_for_network(fd.signals[rows[k]]);
    for (std::size_t i = 0; i < plain.size(); ++i)
      CHECK(f.inputs(Eigen::Index(i), Eigen::Index(k)) == plain[i]);
    CHECK(f.target_a[k] == nn::bin_encode(fd.labels[rows[k]].mu_a(), cfg.model.binning_a()));
    CHECK(f.target_s[k] == nn::bin_encode(fd.labels[rows[k]].mu_s_prime(), cfg.model.binning_s()));
  }

  auto wrong = cfg.model;
  wrong.input_len = 200;
  CHECK(code_of([&] { preprocess(fd, rows, false, cfg.preprocess, wrong, 5); }) == ErrorCode::ConfigMismatch);
}

TEST_CASE("metric identities") {
  const std::vector<double> truth{0.004, 0.011, 0.019, 0.007};
  const auto perfect = compute_metrics(truth, truth);
  CHECK(perfect.mre == 0.0);
  CHECK(perfect.bias == 0.0);
  CHECK(perfect.std == 0.0);
  CHECK(perfect.success == 100.0);

  std::vector<double> scaled;
  for (double t : truth)
    scaled.push_back(1.05 * t);
  const auto s = compute_metrics(truth, scaled);
  CHECK(s.mre == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(s.bias == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(s.std < 1e-12);
  CHECK(s.success == 100.0);

  std::vector<double> alt;
  for (std::size_t i = 0; i < truth.size(); ++i)
    alt.push_back((i % 2 == 0 ? 1.2 : 0.8) * truth[i]);
  const auto a = compute_metrics(truth, alt);
  CHECK(a.mre == doctest::Approx(20.0).epsilon(1e-12));
  CHECK(std::abs(a.bias) < 1e-12);
  CHECK(a.std == doctest::Approx(20.0).epsilon(1e-12));
  CHECK(a.success == 0.0);
  CHECK(a.count == 4);
  CHECK_THROWS_AS(compute_metrics(truth, std::vector<double>(3, 1.0)), Error);
}

TEST_CASE("training determinism, thread invariance and best checkpoint") {
  auto cfg = small_train();
  cfg.batch_size = 40; // two gradient chunks per batch
  cfg.epochs = 4;
  const auto &fd = fd_data();
  const auto a = pretrain(fd, cfg, 1);
  const auto b = pretrain(fd, cfg, 1);
  const auto c = pretrain(fd, cfg, 4);
  CHECK(same_params(a.model, b.model));
  CHECK(same_params(a.model, c.model));
  CHECK(a.fit.history.size() == 4);
  REQUIRE(a.fit.best_epoch >= 1);

  double running = 1e300;
  for (const auto &h : a.fit.history) {
    const double next = std::min(running, h.val_loss);
    CHECK(next <= running);
    running = next;
  }
  CHECK(running == a.fit.best_val_loss);
  const auto val = preprocess(fd, a.split.val, false, cfg.preprocess, cfg.model, cfg.seed);
  CHECK(mean_loss(a.model, val, cfg.weight_a) == a.fit.best_val_loss);

  auto other = cfg;
  other.seed = 2;
  CHECK_FALSE(same_params(pretrain(fd, other, 1).model, a.model));
}

TEST_CASE("fine-tuning contracts") {
  auto cfg = small_train();
  const auto pre = pretrain(fd_data(), cfg, 1);
  const auto &mc = mc_data();

  auto frozen = cfg;
  frozen.freeze_lstm = true;
  const auto ft = run_preset(Preset::Finetune, &pre.model, mc, frozen, 1);
  const auto trunk = pre.model.trunk_size();
  CHECK(std::equal(pre.model.params().begin(), pre.model.params().begin() + std::ptrdiff_t(trunk),
                   ft.model.params().begin()));
  CHECK_FALSE(same_params(ft.model, pre.model));
  for (const auto &h : ft.fit.history)
    CHECK(h.lr_lstm == 0.0);

  // Equal rates without freezing reduce to plain training from the same start.
  auto equal = cfg;
  equal.lr_lstm = equal.lr_fc = equal.lr = 3e-4;
  const auto tuned = run_preset(Preset::Finetune, &pre.model, mc, equal, 1);
  nn::DualHeadModel manual = pre.model;
  const auto split = split_dataset(mc.size(), equal.split, equal.seed);
  const auto tr = preprocess(mc, split.train, true, equal.preprocess, equal.model, equal.seed);
  const auto va = preprocess(mc, split.val, false, equal.preprocess, equal.model, equal.seed);
  fit(manual, tr, va, train_options(equal, 1));
  CHECK(same_params(manual, tuned.model));

  const auto direct = run_preset(Preset::Direct, &pre.model, mc, cfg, 1);
  CHECK(nn::model_hash(direct.model) == nn::model_hash(pre.model));
  CHECK(direct.fit.history.empty());
  CHECK(direct.split.test == tuned.split.test);

  auto mismatch = cfg;
  mismatch.model.hidden_size = 7;
  CHECK(code_of([&] { run_preset(Preset::Finetune, &pre.model, mc, mismatch, 1); }) == ErrorCode::ConfigMismatch);
  CHECK(code_of([&] { run_preset(Preset::Direct, nullptr, mc, cfg, 1); }) == ErrorCode::MissingFile);
  CHECK_THROWS_AS(run_preset(Preset::Scratch, nullptr, fd_data(), cfg, 1), Error);
}

TEST_CASE("leakage audit") {
  auto cfg = small_train();
  const auto &mc = mc_data();
  const auto split = split_dataset(mc.size(), cfg.split, 1);
  const auto tr = preprocess(mc, split.train, true, cfg.preprocess, cfg.model, 1);
  const auto va = preprocess(mc, split.val, false, cfg.preprocess, cfg.model, 1);
  const auto te = preprocess(mc, split.test, false, cfg.preprocess, cfg.model, 1);
  nn::DualHeadModel model(cfg.model, 1);
  auto opts = train_options(cfg, 1);
  opts.epochs = 2;
  const auto f = fit(model, tr, va, opts);
  CHECK(f.visited.size() == 2 * tr.size());
  CHECK_NOTHROW(audit_no_leakage(split, tr, va, te, f));
  for (auto test_row : split.test)
    for (auto col : f.visited)
      CHECK(tr.source[col] != test_row);

  auto overlapping = split;
  overlapping.val.push_back(split.train.front());
  CHECK_THROWS_AS(audit_no_leakage(overlapping, tr, va, te, f), Error);
  const auto te_aug = preprocess(mc, split.test, true, cfg.preprocess, cfg.model, 1);
  CHECK_THROWS_AS(audit_no_leakage(split, tr, va, te_aug, f), Error);
  // Training on the test rows is caught through the visited columns.
  FitResult fake;
  fake.visited = {0};
  CHECK_THROWS_AS(audit_no_leakage(split, te, va, te, fake), Error);
}

TEST_CASE("divergence guard") {
  auto cfg = small_train();
  const auto &fd = fd_data();
  const auto split = split_dataset(fd.size(), cfg.split, 1);
  const auto tr = preprocess(fd, split.train, true, cfg.preprocess, cfg.model, 1);
  const auto va = preprocess(fd, split.val, false, cfg.preprocess, cfg.model, 1);
  nn::DualHeadModel model(cfg.model, 1);
  model.params_mut()[model.layout().head_a.b2.offset] = std::numeric_limits<double>::quiet_NaN();
  CHECK(code_of([&] { fit(model, tr, va, train_options(cfg, 1)); }) == ErrorCode::Diverged);
}

TEST_CASE("experiment matrix") {
  auto base = small_train();
  base.epochs = 2;
  const auto pre = pretrain(fd_data(), base, 1);
  const nlohmann::json spec = {
      {"base", to_json(base)},
      {"entries",
       {{{"name", "ft"}, {"preset", "finetune"}, {"set", {{"lr_fc", 1e-3}}}},
        {{"name", "direct"}, {"preset", "direct"}},
        {{"name", "wide"}, {"preset", "finetune"}, {"set", {{"model", {{"hidden_size", 9}}}}}}}}};
  const auto entries = matrix_from_json(spec);
  REQUIRE(entries.size() == 3);
  CHECK(entries[0].config.lr_fc == 1e-3);
  CHECK(entries[1].config.lr_fc == base.lr_fc);

  std::size_t seen = 0;
  const auto rows = run_experiment_matrix(entries, &pre.model, mc_data(), 1, [&](const MatrixRow &) { ++seen; });
  REQUIRE(rows.size() == 3);
  CHECK(seen == 3);
  CHECK(rows[0].ok);
  CHECK(rows[1].ok);
  CHECK(rows[1].model_hash == nn::model_hash(pre.model));
  CHECK_FALSE(rows[2].ok);
  CHECK(rows[2].error.find("does not match") != std::string::npos);

  const fs::path dir = fs::temp_directory_path() / "tpsf_test_matrix";
  fs::create_directories(dir);
  write_matrix_csv(dir / "matrix.csv", rows);
  std::ifstream in(dir / "matrix.csv");
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);)
    lines.push_back(line);
  REQUIRE(lines.size() == 4);
  CHECK(lines[1].rfind("ft,finetune,ok,", 0) == 0);
  CHECK(lines[2].rfind("direct,direct,ok,", 0) == 0);
  CHECK(lines[3].rfind("wide,finetune,failed,", 0) == 0);
  CHECK(lines[1] != lines[2]);
  fs::remove_all(dir);

  CHECK_THROWS_AS(matrix_from_json({{"entries", nlohmann::json::array()}}), Error);
  CHECK_THROWS_AS(matrix_from_json({{"entries", {{{"name", "x"}, {"preset", "bogus"}}}}}), Error);
  CHECK_THROWS_AS(matrix_from_json({{"entries", {{{"name", "x"}, {"preset", "direct"}, {"set", {{"nope", 1}}}}}}}),
                  Error);
}
