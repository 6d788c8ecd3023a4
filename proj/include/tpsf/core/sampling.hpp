#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include <tpsf/core/types.hpp>

namespace tpsf {

enum class SamplingMode { UniformGrid, LatinRandom };

SamplingMode sampling_mode_from_string(std::string_view s);
std::string_view to_string(SamplingMode m);

/// Draws `n_samples` (mu_a, mu_s') pairs inside the two ranges.
///
/// UniformGrid lays out a na x ns tensor grid with na = ceil(sqrt(n)) and
/// ns = ceil(n / na) (endpoints included, a single point sits at the midpoint)
/// and keeps the first n points in mu_a-major order. LatinRandom is a
/// two-dimensional Latin hypercube with one stratum per sample per axis.
std::vector<OpticalProperties> sample_parameter_grid(const ParamRange &range_a, const ParamRange &range_s,
                                                     std::size_t n_samples, SamplingMode mode,
                                                     std::uint64_t seed, double g = kDefaultAnisotropy,
                                                     double n = kDefaultRefractiveIndex);

} // namespace tpsf
