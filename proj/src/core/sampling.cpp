#include <tpsf/core/sampling.hpp>

#include <cmath>
#include <numeric>
#include <string>

#include <tpsf/core/error.hpp>
#include <tpsf/core/rng.hpp>

namespace tpsf {
namespace {

std::vector<double> linspace(const ParamRange &r, std::size_t k) {
  if (k == 1)
    return {0.5 * (r.lo + r.hi)};
  std::vector<double> out(k);
  for (std::size_t i = 0; i < k; ++i)
    out[i] = r.lo + r.width() * static_cast<double>(i) / static_cast<double>(k - 1);
  out.back() = r.hi;
  return out;
}

std::vector<double> latin_axis(const ParamRange &r, std::size_t n, CounterRng &rng) {
  std::vector<std::size_t> strata(n);
  std::iota(strata.begin(), strata.end(), 0);
  shuffle(strata.begin(), strata.end(), rng);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = (static_cast<double>(strata[i]) + rng.uniform()) / static_cast<double>(n);
    out[i] = r.lo + r.width() * u;
  }
  return out;
}

} // namespace

SamplingMode sampling_mode_from_string(std::string_view s) {
  if (s == "uniform_grid")
    return SamplingMode::UniformGrid;
  if (s == "latin_random")
    return SamplingMode::LatinRandom;
  fail(ErrorCode::InvalidArgument, "unknown sampling mode '" + std::string(s) + "'");
}

std::string_view to_string(SamplingMode m) {
  return m == SamplingMode::UniformGrid ? "uniform_grid" : "latin_random";
}

std::vector<OpticalProperties> sample_parameter_grid(const ParamRange &range_a, const ParamRange &range_s,
                                                     std::size_t n_samples, SamplingMode mode,
                                                     std::uint64_t seed, double g, double n) {
  range_a.validate();
  range_s.validate();
  require(n_samples >= 1, "n_samples must be at least 1");

  std::vector<OpticalProperties> out;
  out.reserve(n_samples);
  if (mode == SamplingMode::UniformGrid) {
    const auto na = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n_samples))));
    const std::size_t ns = (n_samples + na - 1) / na;
    const auto xs = linspace(range_a, na);
    const auto ys = linspace(range_s, ns);
    for (std::size_t i = 0; i < na && out.size() < n_samples; ++i)
      for (std::size_t j = 0; j < ns && out.size() < n_samples; ++j)
        out.emplace_back(xs[i], ys[j], g, n);
    return out;
  }

  CounterRng rng(seed, 0x5A3D);
  const auto xs = latin_axis(range_a, n_samples, rng);
  const auto ys = latin_axis(range_s, n_samples, rng);
  for (std::size_t i = 0; i < n_samples; ++i)
    out.emplace_back(xs[i], ys[i], g, n);
  return out;
}

} // namespace tpsf
