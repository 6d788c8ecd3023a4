#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include <tpsf/core/types.hpp>

namespace tpsf::nn {

/// Uniform discretization of a parameter range into classification bins.
class ParamBinning {
public:
  ParamBinning(const ParamRange &range, std::size_t n_bins);

  const ParamRange &range() const { return range_; }
  std::size_t n_bins() const { return centers_.size(); }
  const std::vector<double> &edges() const { return edges_; }
  const std::vector<double> &centers() const { return centers_; }
  double width() const { return range_.width() / static_cast<double>(n_bins()); }

  friend bool operator==(const ParamBinning &a, const ParamBinning &b) {
    return a.range_ == b.range_ && a.n_bins() == b.n_bins();
  }

private:
  ParamRange range_;
  std::vector<double> edges_;
  std::vector<double> centers_;
};

enum class DecodeMode { ArgmaxCenter, Expectation };

DecodeMode decode_mode_from_string(std::string_view s);

/// Bin containing `value`; values at or past the range ends clip to the end bins.
std::size_t bin_encode(double value, const ParamBinning &b);

/// ArgmaxCenter returns the center of the most probable bin (lowest index on
/// ties); Expectation returns sum_i p_i center_i.
double bin_decode(std::span<const double> probs, const ParamBinning &b, DecodeMode mode = DecodeMode::ArgmaxCenter);

} // namespace tpsf::nn
