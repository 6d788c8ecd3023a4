#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

namespace tpsf {

/// Vacuum speed of light in mm/ns.
inline constexpr double kSpeedOfLight = 299.792458;

inline constexpr double kDefaultAnisotropy = 0.8;
inline constexpr double kDefaultRefractiveIndex = 1.33;

/// Homogeneous medium description. The reduced scattering coefficient is the
/// stored quantity; the scattering coefficient is always derived from it.
/// Units: mm^-1 for coefficients, mm/ns for speed.
class OpticalProperties {
public:
  OpticalProperties(double mu_a, double mu_s_prime, double g = kDefaultAnisotropy,
                    double n = kDefaultRefractiveIndex);

  double mu_a() const noexcept { return mu_a_; }
  double mu_s_prime() const noexcept { return mu_s_prime_; }
  double g() const noexcept { return g_; }
  double n() const noexcept { return n_; }

  double mu_s() const noexcept { return mu_s_prime_ / (1.0 - g_); }
  double speed() const noexcept { return kSpeedOfLight / n_; }

  friend bool operator==(const OpticalProperties &, const OpticalProperties &) = default;

private:
  double mu_a_;
  double mu_s_prime_;
  double g_;
  double n_;
};

/// Which of the two estimated parameters a quantity refers to.
enum class Param { MuA, MuSPrime };

std::string_view to_string(Param p);
double value_of(const OpticalProperties &props, Param p);

/// Uniform time binning shared by every signal in a dataset (ns).
struct TimeGrid {
  double t_start = 0.0;
  double dt = 0.005;
  std::size_t n_bins = 200;

  double bin_center(std::size_t i) const { return t_start + (static_cast<double>(i) + 0.5) * dt; }
  double t_end() const { return t_start + static_cast<double>(n_bins) * dt; }

  friend bool operator==(const TimeGrid &, const TimeGrid &) = default;
};

/// Time-binned detected intensity (arbitrary units).
struct TpsfSignal {
  std::vector<double> values;
  double t_start = 0.0;
  double dt = 0.005;

  TpsfSignal() = default;
  TpsfSignal(std::vector<double> v, const TimeGrid &grid);
  TpsfSignal(std::vector<double> v, double t0, double width) : values(std::move(v)), t_start(t0), dt(width) {}

  std::size_t size() const noexcept { return values.size(); }
  TimeGrid grid() const { return {t_start, dt, values.size()}; }
  double bin_center(std::size_t i) const { return grid().bin_center(i); }
  double peak() const;

  /// Throws unless length > 0, dt > 0 and all values are finite and non-negative.
  void validate() const;

  friend bool operator==(const TpsfSignal &, const TpsfSignal &) = default;
};

/// Closed interval of admissible parameter values.
struct ParamRange {
  double lo = 0.0;
  double hi = 1.0;

  double width() const noexcept { return hi - lo; }
  bool contains(double x) const noexcept { return x >= lo && x <= hi; }

  /// Checks lo < hi; with `require_positive` also lo > 0 (physical ranges).
  void validate(bool require_positive = true) const;

  friend bool operator==(const ParamRange &, const ParamRange &) = default;
};

inline constexpr ParamRange kDefaultMuARange{0.002, 0.02};
inline constexpr ParamRange kDefaultMuSPrimeRange{0.5, 2.0};

} // namespace tpsf
