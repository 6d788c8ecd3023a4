#include <tpsf/nn/binning.hpp>

#include <cmath>
#include <string>

#include <tpsf/core/error.hpp>

namespace tpsf::nn {

ParamBinning::ParamBinning(const ParamRange &range, std::size_t n_bins) : range_(range) {
  range.validate(false);
  require(n_bins >= 2, "a binning needs at least two bins");
  edges_.resize(n_bins + 1);
  for (std::size_t i = 0; i <= n_bins; ++i)
    edges_[i] = range.lo + range.width() * static_cast<double>(i) / static_cast<double>(n_bins);
  edges_.back() = range.hi;
  centers_.resize(n_bins);
  for (std::size_t i = 0; i < n_bins; ++i)
    centers_[i] = 0.5 * (edges_[i] + edges_[i + 1]);
}

DecodeMode decode_mode_from_string(std::string_view s) {
  if (s == "argmax_center")
    return DecodeMode::ArgmaxCenter;
  if (s == "expectation")
    return DecodeMode::Expectation;
  fail(ErrorCode::InvalidArgument, "unknown decode mode '" + std::string(s) + "'");
}

std::size_t bin_encode(double value, const ParamBinning &b) {
  require(!std::isnan(value), "cannot bin a NaN value");
  if (value <= b.range().lo)
    return 0;
  if (value >= b.range().hi)
    return b.n_bins() - 1;
  const double pos = (value - b.range().lo) / b.range().width() * static_cast<double>(b.n_bins());
  auto idx = static_cast<std::size_t>(pos);
  if (idx >= b.n_bins())
    idx = b.n_bins() - 1;
  return idx;
}

double bin_decode(std::span<const double> probs, const ParamBinning &b, DecodeMode mode) {
  require(probs.size() == b.n_bins(), "probability vector length does not match the binning");
  double total = 0.0;
  for (double p : probs)
    total += p;
  require(std::abs(total - 1.0) <= 1e-6, "probabilities must sum to 1");
  if (mode == DecodeMode::Expectation) {
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i)
      acc += probs[i] * b.centers()[i];
    return acc;
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < probs.size(); ++i)
    if (probs[i] > probs[best])
      best = i;
  return b.centers()[best];
}

} // namespace tpsf::nn
