#include <tpsf/sigproc/sigproc.hpp>

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/QR>

#include <tpsf/core/error.hpp>

namespace tpsf::sig {

void SavGolSpec::validate() const {
  require(window >= 3 && window % 2 == 1, "Savitzky-Golay window must be odd and >= 3");
  require(poly_order + 2 <= window, "Savitzky-Golay order must not exceed window - 2");
}

namespace {

// Least-squares weights over `npts` equally spaced samples for a polynomial of
// degree `order`, evaluated at sample `at`. They are row `at` of the hat matrix
// V (V^T V)^-1 V^T, obtained via QR rather than the normal equations.
std::vector<double> fit_weights(std::size_t npts, std::size_t order, std::size_t at) {
  const auto n = static_cast<Eigen::Index>(npts);
  const auto p = static_cast<Eigen::Index>(order) + 1;
  const double half = std::max(0.5 * static_cast<double>(npts - 1), 0.5);

  Eigen::MatrixXd vander(n, p);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double x = (static_cast<double>(k) - half) / half;
    double power = 1.0;
    for (Eigen::Index j = 0; j < p; ++j, power *= x)
      vander(k, j) = power;
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(vander);
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, p);
  const Eigen::VectorXd w = q * q.row(static_cast<Eigen::Index>(at)).transpose();
  return {w.data(), w.data() + n};
}

} // namespace

std::vector<double> savgol_weights(const SavGolSpec &spec, std::size_t at) {
  spec.validate();
  require(at < spec.window, "evaluation offset outside the window");
  return fit_weights(spec.window, spec.poly_order, at);
}

TpsfSignal savgol_filter(const TpsfSignal &signal, const SavGolSpec &spec) {
  spec.validate();
  const std::size_t n = signal.size(), half = spec.window / 2;
  require(n >= spec.window, "signal shorter than the Savitzky-Golay window");

  const auto interior = fit_weights(spec.window, spec.poly_order, half);
  TpsfSignal out = signal;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(n - 1, i + half);
    const std::size_t npts = hi - lo + 1;
    // Near the ends the window is cut off at the boundary; with too few points
    // left the degree drops so the fit stays determined.
    const auto w = npts == spec.window ? interior : fit_weights(npts, std::min(spec.poly_order, npts - 1), i - lo);
    // Weights sum to one, so the fit is accumulated as a correction to the
    // center sample; flat stretches then pass through bit-exactly.
    const double center = signal.values[i];
    double acc = 0.0;
    for (std::size_t k = 0; k < npts; ++k)
      acc += w[k] * (signal.values[lo + k] - center);
    out.values[i] = std::max(0.0, center + acc);
  }
  return out;
}

std::vector<double> log_floored(const std::vector<double> &values, double floor_ratio) {
  require(floor_ratio > 0.0, "floor ratio must be positive");
  const double peak = values.empty() ? 0.0 : *std::max_element(values.begin(), values.end());
  if (!(peak > 0.0))
    fail(ErrorCode::InvalidArgument, "signal has no positive value");
  const double floor = floor_ratio * peak;
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i)
    out[i] = std::log10(std::max(values[i], floor));
  return out;
}

std::vector<double> normalize_for_network(const TpsfSignal &signal, double floor_ratio) {
  require(floor_ratio > 0.0 && floor_ratio < 1.0, "floor ratio must lie in (0, 1)");
  const double peak = signal.peak();
  if (!(peak > 0.0))
    fail(ErrorCode::InvalidArgument, "cannot normalize an all-zero signal");
  // Peak-relative values, so the peak maps to log10(1) = 0 exactly.
  std::vector<double> v(signal.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = std::log10(std::max(signal.values[i] / peak, floor_ratio));
  const double lo = *std::min_element(v.begin(), v.end());
  if (lo >= 0.0) {
    std::fill(v.begin(), v.end(), 1.0);
    return v;
  }
  for (auto &x : v)
    x = (x - lo) / -lo;
  return v;
}

TpsfSignal augment_proportional_noise(const TpsfSignal &signal, double alpha, CounterRng &rng) {
  require(alpha >= 0.0, "noise level must be non-negative");
  TpsfSignal out = signal;
  if (alpha == 0.0)
    return out;
  for (auto &s : out.values)
    s = std::max(0.0, s * (1.0 + alpha * rng.normal()));
  return out;
}

double asymptotic_slope(const TpsfSignal &signal, double t_min) {
  std::vector<double> ts, ys;
  for (std::size_t i = 0; i < signal.size(); ++i) {
    const double t = signal.bin_center(i);
    if (t > t_min && signal.values[i] > 0.0) {
      ts.push_back(t);
      ys.push_back(std::log(signal.values[i]));
    }
  }
  if (ts.size() < 5)
    fail(ErrorCode::InsufficientData, "only " + std::to_string(ts.size()) + " positive bins after t = " +
                                          std::to_string(t_min) + " ns, need 5");
  const auto n = static_cast<double>(ts.size());
  double tm = 0.0, ym = 0.0;
  for (std::size_t k = 0; k < ts.size(); ++k) {
    tm += ts[k];
    ym += ys[k];
  }
  tm /= n;
  ym /= n;
  double sty = 0.0, stt = 0.0;
  for (std::size_t k = 0; k < ts.size(); ++k) {
    sty += (ts[k] - tm) * (ys[k] - ym);
    stt += (ts[k] - tm) * (ts[k] - tm);
  }
  return sty / stt;
}

} // namespace tpsf::sig
