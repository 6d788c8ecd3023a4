#include <tpsf/core/types.hpp>

#include <algorithm>
#include <cmath>
#include <string>

#include <tpsf/core/error.hpp>

namespace tpsf {

OpticalProperties::OpticalProperties(double mu_a, double mu_s_prime, double g, double n)
    : mu_a_(mu_a), mu_s_prime_(mu_s_prime), g_(g), n_(n) {
  require(std::isfinite(mu_a) && mu_a > 0.0, "mu_a must be positive, got " + std::to_string(mu_a));
  require(std::isfinite(mu_s_prime) && mu_s_prime > 0.0,
          "mu_s_prime must be positive, got " + std::to_string(mu_s_prime));
  require(g >= 0.0 && g < 1.0, "anisotropy g must lie in [0,1), got " + std::to_string(g));
  require(std::isfinite(n) && n >= 1.0, "refractive index must be >= 1, got " + std::to_string(n));
}

std::string_view to_string(Param p) { return p == Param::MuA ? "mu_a" : "mu_s_prime"; }

double value_of(const OpticalProperties &props, Param p) {
  return p == Param::MuA ? props.mu_a() : props.mu_s_prime();
}

TpsfSignal::TpsfSignal(std::vector<double> v, const TimeGrid &grid)
    : values(std::move(v)), t_start(grid.t_start), dt(grid.dt) {
  require(values.size() == grid.n_bins, "signal length does not match time grid");
}

double TpsfSignal::peak() const {
  return values.empty() ? 0.0 : *std::max_element(values.begin(), values.end());
}

void TpsfSignal::validate() const {
  require(!values.empty(), "signal has no bins");
  require(std::isfinite(dt) && dt > 0.0, "signal bin width must be positive");
  for (double v : values)
    require(std::isfinite(v) && v >= 0.0, "signal values must be finite and non-negative");
}

void ParamRange::validate(bool require_positive) const {
  require(std::isfinite(lo) && std::isfinite(hi) && lo < hi,
          "parameter range needs lo < hi, got [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  if (require_positive)
    require(lo > 0.0, "parameter range lower bound must be positive");
}

} // namespace tpsf
