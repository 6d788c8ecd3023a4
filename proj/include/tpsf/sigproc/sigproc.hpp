#pragma once

#include <cstddef>
#include <vector>

#include <tpsf/core/rng.hpp>
#include <tpsf/core/types.hpp>

namespace tpsf::sig {

struct SavGolSpec {
  std::size_t window = 11;
  std::size_t poly_order = 3;

  void validate() const;
};

/// Weights w such that sum_k w[k] x[k] evaluates, at offset `at` inside the
/// window [0, window), the least-squares polynomial of degree poly_order.
std::vector<double> savgol_weights(const SavGolSpec &spec, std::size_t at);

/// Savitzky-Golay smoothing. Near the edges the window is truncated at the
/// signal boundary and the fit is evaluated off-center. Output is clamped at 0.
TpsfSignal savgol_filter(const TpsfSignal &signal, const SavGolSpec &spec);

inline constexpr double kDefaultFloorRatio = 1e-6;

/// log10 of the signal floored at floor_ratio * peak.
std::vector<double> log_floored(const std::vector<double> &values, double floor_ratio = kDefaultFloorRatio);

/// Peak-relative log signal mapped affinely onto [0, 1].
std::vector<double> normalize_for_network(const TpsfSignal &signal, double floor_ratio = kDefaultFloorRatio);

/// s_i (1 + alpha z_i), z_i ~ N(0, 1), clamped at 0.
TpsfSignal augment_proportional_noise(const TpsfSignal &signal, double alpha, CounterRng &rng);

inline constexpr double kLateTimeStart = 0.75;

/// Least-squares slope of ln(s) against bin-center time over the positive bins
/// with t > t_min (ns^-1). Needs at least 5 such bins.
double asymptotic_slope(const TpsfSignal &signal, double t_min = kLateTimeStart);

} // namespace tpsf::sig
