#include <tpsf/nn/model.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include <tpsf/core/error.hpp>
#include <tpsf/core/rng.hpp>

namespace tpsf::nn {
namespace {

using Eigen::Index;
using Eigen::MatrixXd;

Index ix(std::size_t v) { return static_cast<Index>(v); }

Slot take(std::size_t &cursor, std::size_t rows, std::size_t cols = 1) {
  Slot s{cursor, rows, cols};
  cursor += rows * cols;
  return s;
}

HeadSlots take_head(std::size_t &cursor, std::size_t in, std::size_t hidden, std::size_t out) {
  HeadSlots h;
  h.w1 = take(cursor, hidden, in);
  h.b1 = take(cursor, hidden);
  h.w2 = take(cursor, out, hidden);
  h.b2 = take(cursor, out);
  return h;
}

Eigen::Map<MatrixXd> mut_view(ParamVector &g, const Slot &s) {
  return {g.data() + s.offset, ix(s.rows), ix(s.cols)};
}

MatrixXd softmax_columns(const MatrixXd &logits) {
  MatrixXd p(logits.rows(), logits.cols());
  for (Index c = 0; c < logits.cols(); ++c) {
    const double mx = logits.col(c).maxCoeff();
    p.col(c) = (logits.col(c).array() - mx).exp().matrix();
    p.col(c) /= p.col(c).sum();
  }
  return p;
}

void run_direction(const DualHeadModel &model, const LstmSlots &slots, const MatrixXd &input, std::size_t T,
                   std::size_t B, bool reverse, DirectionCache &dc) {
  const auto wx = model.view(slots.wx);
  const auto wh = model.view(slots.wh);
  const auto b = model.view(slots.b);
  const Index h = wh.cols();
  const Index bb = ix(B);

  MatrixXd z = wx * input;
  z.colwise() += b.col(0);

  dc.gates.resize(4 * h, z.cols());
  dc.cell.resize(h, z.cols());
  dc.hidden.resize(h, z.cols());
  dc.tanh_cell.resize(h, z.cols());

  MatrixXd h_prev = MatrixXd::Zero(h, bb);
  MatrixXd c_prev = MatrixXd::Zero(h, bb);
  MatrixXd zt(4 * h, bb);
  for (std::size_t s = 0; s < T; ++s) {
    const Index col = ix(reverse ? T - 1 - s : s) * bb;
    zt.noalias() = z.middleCols(col, bb);
    zt.noalias() += wh * h_prev;
    auto gates = dc.gates.middleCols(col, bb);
    // tanh(x) = 2 sigmoid(2x) - 1 lets one vectorized exp cover all four gates.
    zt.middleRows(2 * h, h) *= 2.0;
    gates.array() = (1.0 + (-zt.array()).exp()).inverse();
    gates.middleRows(2 * h, h).array() = 2.0 * gates.middleRows(2 * h, h).array() - 1.0;

    auto c = dc.cell.middleCols(col, bb);
    c = (gates.middleRows(h, h).array() * c_prev.array() +
         gates.topRows(h).array() * gates.middleRows(2 * h, h).array())
            .matrix();
    auto tc = dc.tanh_cell.middleCols(col, bb);
    tc.array() = 2.0 / (1.0 + (-2.0 * c.array()).exp()) - 1.0;
    auto hid = dc.hidden.middleCols(col, bb);
    hid = (gates.bottomRows(h).array() * tc.array()).matrix();
    h_prev = hid;
    c_prev = c;
  }
}

void head_forward(const DualHeadModel &model, const HeadSlots &slots, const MatrixXd &rep, HeadCache &hc) {
  hc.pre = model.view(slots.w1) * rep;
  hc.pre.colwise() += model.view(slots.b1).col(0);
  hc.act = hc.pre.cwiseMax(0.0);
  hc.logits = model.view(slots.w2) * hc.act;
  hc.logits.colwise() += model.view(slots.b2).col(0);
  hc.probs = softmax_columns(hc.logits);
}

// Accumulates head gradients into `grad` and returns d loss / d representation.
MatrixXd head_backward(const DualHeadModel &model, const HeadSlots &slots, const HeadCache &hc,
                       const MatrixXd &rep, std::span<const std::size_t> targets, double scale,
                       ParamVector &grad) {
  MatrixXd dlogits = hc.probs;
  for (Index c = 0; c < dlogits.cols(); ++c)
    dlogits(ix(targets[static_cast<std::size_t>(c)]), c) -= 1.0;
  dlogits *= scale;

  mut_view(grad, slots.w2).noalias() += dlogits * hc.act.transpose();
  mut_view(grad, slots.b2).noalias() += dlogits.rowwise().sum();
  MatrixXd dpre = model.view(slots.w2).transpose() * dlogits;
  dpre = (hc.pre.array() > 0.0).select(dpre, 0.0);
  mut_view(grad, slots.w1).noalias() += dpre * rep.transpose();
  mut_view(grad, slots.b1).noalias() += dpre.rowwise().sum();
  return model.view(slots.w1).transpose() * dpre;
}

} // namespace

void ModelConfig::validate() const {
  require(input_len >= 1, "input_len must be positive");
  require(hidden_size >= 1, "hidden_size must be at least 1");
  require(num_layers >= 1, "num_layers must be at least 1");
  require(dropout >= 0.0 && dropout < 1.0, "dropout must lie in [0, 1)");
  require(n_bins_a >= 2 && n_bins_s >= 2, "each head needs at least two bins");
  require(head_hidden >= 1, "head_hidden must be at least 1");
  range_a.validate(false);
  range_s.validate(false);
}

nlohmann::json to_json(const ModelConfig &c) {
  return {{"input_len", c.input_len},     {"hidden_size", c.hidden_size}, {"num_layers", c.num_layers},
          {"dropout", c.dropout},         {"n_bins_a", c.n_bins_a},       {"n_bins_s", c.n_bins_s},
          {"head_hidden", c.head_hidden}, {"range_a", {c.range_a.lo, c.range_a.hi}},
          {"range_s", {c.range_s.lo, c.range_s.hi}}};
}

ModelConfig model_config_from_json(const nlohmann::json &j, ModelConfig c) {
  auto count = [&](const char *key, std::size_t &dst) {
    if (!j.contains(key))
      return;
    const auto &v = j[key];
    if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0))
      fail(ErrorCode::InvalidArgument, std::string("model '") + key + "' must be a non-negative integer");
    dst = v.get<std::size_t>();
  };
  count("input_len", c.input_len);
  count("hidden_size", c.hidden_size);
  count("num_layers", c.num_layers);
  c.dropout = j.value("dropout", c.dropout);
  count("n_bins_a", c.n_bins_a);
  count("n_bins_s", c.n_bins_s);
  count("head_hidden", c.head_hidden);
  if (j.contains("range_a"))
    c.range_a = {j["range_a"].at(0).get<double>(), j["range_a"].at(1).get<double>()};
  if (j.contains("range_s"))
    c.range_s = {j["range_s"].at(0).get<double>(), j["range_s"].at(1).get<double>()};
  c.validate();
  return c;
}

ParamLayout::ParamLayout(const ModelConfig &cfg) {
  const std::size_t h = cfg.hidden_size;
  std::size_t cursor = 0;
  lstm.resize(cfg.num_layers);
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    const std::size_t in = l == 0 ? 1 : 2 * h;
    for (auto &d : lstm[l]) {
      d.wx = take(cursor, 4 * h, in);
      d.wh = take(cursor, 4 * h, h);
      d.b = take(cursor, 4 * h);
    }
  }
  trunk_size = cursor;
  head_a = take_head(cursor, 2 * h, cfg.head_hidden, cfg.n_bins_a);
  head_s = take_head(cursor, 2 * h, cfg.head_hidden, cfg.n_bins_s);
  total = cursor;
}

DualHeadModel::DualHeadModel(const ModelConfig &cfg) : cfg_(cfg), layout_((cfg.validate(), cfg)) {
  params_.assign(layout_.total, 0.0);
}

DualHeadModel::DualHeadModel(const ModelConfig &cfg, std::uint64_t init_seed) : DualHeadModel(cfg) {
  initialize(init_seed);
}

Eigen::Map<const MatrixXd> DualHeadModel::view(const Slot &s) const {
  return {params_.data() + s.offset, ix(s.rows), ix(s.cols)};
}

void DualHeadModel::initialize(std::uint64_t seed) {
  ++version_;
  CounterRng rng(seed, 0x1A17);
  const double k = 1.0 / std::sqrt(static_cast<double>(cfg_.hidden_size));
  auto fill_uniform = [&](const Slot &s) {
    for (std::size_t i = 0; i < s.size(); ++i)
      params_[s.offset + i] = (2.0 * rng.uniform() - 1.0) * k;
  };
  auto fill_zero = [&](const Slot &s) { std::fill_n(params_.begin() + ix(s.offset), s.size(), 0.0); };
  const std::size_t h = cfg_.hidden_size;
  for (const auto &layer : layout_.lstm)
    for (const auto &d : layer) {
      fill_uniform(d.wx);
      fill_uniform(d.wh);
      fill_zero(d.b);
      std::fill_n(params_.begin() + ix(d.b.offset + h), h, 1.0);
    }
  for (const auto *head : {&layout_.head_a, &layout_.head_s}) {
    fill_uniform(head->w1);
    fill_zero(head->b1);
    fill_uniform(head->w2);
    fill_zero(head->b2);
  }
}

void DualHeadModel::swap_directions() {
  ++version_;
  const std::size_t h = cfg_.hidden_size;
  for (std::size_t l = 0; l < layout_.lstm.size(); ++l) {
    const auto &f = layout_.lstm[l][0];
    const auto &b = layout_.lstm[l][1];
    for (const auto &[sf, sb] : {std::pair{f.wx, b.wx}, std::pair{f.wh, b.wh}, std::pair{f.b, b.b}})
      std::swap_ranges(params_.begin() + ix(sf.offset), params_.begin() + ix(sf.offset + sf.size()),
                       params_.begin() + ix(sb.offset));
    if (l == 0)
      continue;
    // Upper layers read [h_fwd; h_bwd]; after the swap those halves trade places.
    for (const auto *s : {&f.wx, &b.wx}) {
      Eigen::Map<MatrixXd> w(params_.data() + s->offset, ix(s->rows), ix(s->cols));
      MatrixXd left = w.leftCols(ix(h));
      w.leftCols(ix(h)) = w.rightCols(ix(h));
      w.rightCols(ix(h)) = left;
    }
  }
}

ForwardCache forward(const DualHeadModel &model, const MatrixXd &inputs, bool train_mode,
                     std::span<const std::uint64_t> dropout_keys) {
  const ModelConfig &cfg = model.config();
  const std::size_t T = static_cast<std::size_t>(inputs.rows());
  const std::size_t B = static_cast<std::size_t>(inputs.cols());
  if (T != cfg.input_len)
    fail(ErrorCode::ShapeMismatch, "input length " + std::to_string(T) + " does not match model input_len " +
                                       std::to_string(cfg.input_len));
  require(B >= 1, "empty batch");
  require(inputs.allFinite(), "network input must be finite");
  const bool use_dropout = train_mode && cfg.dropout > 0.0 && cfg.num_layers > 1;
  if (use_dropout)
    require(dropout_keys.size() == B, "train mode needs one dropout key per sequence");

  const Index h = ix(cfg.hidden_size), bb = ix(B), tb = ix(T * B);
  ForwardCache cache;
  cache.batch = B;
  cache.train_mode = train_mode;
  cache.model_version = model.version();
  cache.layers.resize(cfg.num_layers);

  MatrixXd layer_in(1, tb);
  for (std::size_t t = 0; t < T; ++t)
    layer_in.middleCols(ix(t) * bb, bb) = inputs.row(ix(t));

  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    LayerCache &lc = cache.layers[l];
    if (l > 0 && use_dropout) {
      const double keep_scale = 1.0 / (1.0 - cfg.dropout);
      lc.mask.resize(2 * h, tb);
      for (std::size_t b = 0; b < B; ++b) {
        CounterRng rng(dropout_keys[b], l);
        for (std::size_t t = 0; t < T; ++t)
          for (Index k = 0; k < 2 * h; ++k)
            lc.mask(k, ix(t) * bb + ix(b)) = rng.uniform() < cfg.dropout ? 0.0 : keep_scale;
      }
      layer_in.array() *= lc.mask.array();
    }
    lc.input = std::move(layer_in);
    for (int d = 0; d < 2; ++d)
      run_direction(model, model.layout().lstm[l][d], lc.input, T, B, d == 1, lc.dir[d]);
    layer_in.resize(2 * h, tb);
    layer_in.topRows(h) = lc.dir[0].hidden;
    layer_in.bottomRows(h) = lc.dir[1].hidden;
  }

  const auto &top = cache.layers.back();
  cache.representation.resize(2 * h, bb);
  cache.representation.topRows(h) = top.dir[0].hidden.middleCols(ix(T - 1) * bb, bb);
  cache.representation.bottomRows(h) = top.dir[1].hidden.middleCols(0, bb);

  head_forward(model, model.layout().head_a, cache.representation, cache.head_a);
  head_forward(model, model.layout().head_s, cache.representation, cache.head_s);
  cache.valid = true;
  return cache;
}

double cross_entropy(std::span<const double> logits, std::size_t target) {
  require(target < logits.size(), "class index out of range");
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double l : logits)
    sum += std::exp(l - mx);
  return mx + std::log(sum) - logits[target];
}

double composite_loss(std::span<const double> logits_a, std::span<const double> logits_s, std::size_t target_a,
                      std::size_t target_s, double weight_a) {
  return weight_a * cross_entropy(logits_a, target_a) + cross_entropy(logits_s, target_s);
}

double batch_loss(const ForwardCache &cache, std::span<const std::size_t> targets_a,
                  std::span<const std::size_t> targets_s, double weight_a) {
  require(cache.valid, "forward cache is empty");
  require(targets_a.size() == cache.batch && targets_s.size() == cache.batch, "target count does not match batch");
  double total = 0.0;
  const auto &la = cache.head_a.logits;
  const auto &ls = cache.head_s.logits;
  for (std::size_t b = 0; b < cache.batch; ++b) {
    const Index c = ix(b);
    total += composite_loss({la.col(c).data(), static_cast<std::size_t>(la.rows())},
                            {ls.col(c).data(), static_cast<std::size_t>(ls.rows())}, targets_a[b], targets_s[b],
                            weight_a);
  }
  return total / static_cast<double>(cache.batch);
}

ParamVector backward(const DualHeadModel &model, const ForwardCache &cache,
                             std::span<const std::size_t> targets_a, std::span<const std::size_t> targets_s,
                             double weight_a, bool trunk) {
  if (!cache.valid || !cache.train_mode)
    fail(ErrorCode::StaleCache, "backward needs a train-mode forward cache");
  if (cache.model_version != model.version())
    fail(ErrorCode::StaleCache, "forward cache predates the current parameters");
  require(targets_a.size() == cache.batch && targets_s.size() == cache.batch, "target count does not match batch");

  const ModelConfig &cfg = model.config();
  const ParamLayout &layout = model.layout();
  ParamVector grad(layout.total, 0.0);
  const double inv_b = 1.0 / static_cast<double>(cache.batch);

  MatrixXd drep = head_backward(model, layout.head_a, cache.head_a, cache.representation, targets_a,
                                weight_a * inv_b, grad);
  drep += head_backward(model, layout.head_s, cache.head_s, cache.representation, targets_s, inv_b, grad);
  if (!trunk)
    return grad;

  const std::size_t T = cfg.input_len, B = cache.batch;
  const Index h = ix(cfg.hidden_size), bb = ix(B), tb = ix(T * B);

  MatrixXd dout = MatrixXd::Zero(2 * h, tb);
  dout.block(0, ix(T - 1) * bb, h, bb) = drep.topRows(h);
  dout.block(h, 0, h, bb) = drep.bottomRows(h);

  for (std::size_t l = cfg.num_layers; l-- > 0;) {
    const LayerCache &lc = cache.layers[l];
    MatrixXd din = l > 0 ? MatrixXd::Zero(lc.input.rows(), tb) : MatrixXd();
    for (int d = 0; d < 2; ++d) {
      const bool reverse = d == 1;
      const LstmSlots &slots = layout.lstm[l][d];
      const DirectionCache &dc = lc.dir[d];
      const auto wh = model.view(slots.wh);

      MatrixXd dz(4 * h, tb);
      MatrixXd h_prev = MatrixXd::Zero(h, tb);
      MatrixXd dh_next = MatrixXd::Zero(h, bb), dc_next = MatrixXd::Zero(h, bb);
      MatrixXd dh(h, bb), dcell(h, bb);
      for (std::size_t s = T; s-- > 0;) {
        const std::size_t t = reverse ? T - 1 - s : s;
        const Index col = ix(t) * bb;
        const bool has_prev = s > 0;
        const Index prev = has_prev ? ix(reverse ? t + 1 : t - 1) * bb : 0;

        const auto gates = dc.gates.middleCols(col, bb);
        const auto gi = gates.topRows(h).array();
        const auto gf = gates.middleRows(h, h).array();
        const auto gg = gates.middleRows(2 * h, h).array();
        const auto go = gates.bottomRows(h).array();
        const auto tc = dc.tanh_cell.middleCols(col, bb).array();

        dh = dout.block(ix(d) * h, col, h, bb) + dh_next;
        dcell = (dh.array() * go * (1.0 - tc.square()) + dc_next.array()).matrix();

        auto dzt = dz.middleCols(col, bb);
        dzt.topRows(h) = (dcell.array() * gg * gi * (1.0 - gi)).matrix();
        if (has_prev) {
          dzt.middleRows(h, h) = (dcell.array() * dc.cell.middleCols(prev, bb).array() * gf * (1.0 - gf)).matrix();
          h_prev.middleCols(col, bb) = dc.hidden.middleCols(prev, bb);
        } else {
          dzt.middleRows(h, h).setZero();
        }
        dzt.middleRows(2 * h, h) = (dcell.array() * gi * (1.0 - gg.square())).matrix();
        dzt.bottomRows(h) = (dh.array() * tc * go * (1.0 - go)).matrix();

        dc_next = (dcell.array() * gf).matrix();
        dh_next.noalias() = wh.transpose() * dzt;
      }

      mut_view(grad, slots.wx).noalias() += dz * lc.input.transpose();
      mut_view(grad, slots.wh).noalias() += dz * h_prev.transpose();
      mut_view(grad, slots.b).noalias() += dz.rowwise().sum();
      if (l > 0)
        din.noalias() += model.view(slots.wx).transpose() * dz;
    }
    if (l > 0) {
      if (lc.mask.size() > 0)
        din.array() *= lc.mask.array();
      dout = std::move(din);
    }
  }
  return grad;
}

std::uint64_t model_hash(const DualHeadModel &model) {
  std::uint64_t hash = 0xCBF29CE484222325ULL;
  const auto p = model.params();
  const auto *bytes = reinterpret_cast<const unsigned char *>(p.data());
  for (std::size_t i = 0; i < p.size() * sizeof(double); ++i) {
    hash ^= bytes[i];
    hash *= 0x100000001B3ULL;
  }
  return hash;
}

} // namespace tpsf::nn
