#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include <tpsf/core/rng.hpp>
#include <tpsf/core/types.hpp>

/// Photon-packet Monte Carlo in a homogeneous cylinder. The cylinder axis is
/// z, the illuminated face is z = 0 and the medium occupies 0 <= z <= H.
namespace tpsf::mc {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  double norm() const;
};

struct McConfig {
  double cyl_radius = 60.0;        ///< mm
  double cyl_height = 60.0;        ///< mm
  double fiber_radius = 1.0;       ///< source fiber, mm
  double cone_half_angle_deg = 30.0;
  double src_det_separation = 10.0; ///< mm, detector center at (d, 0, 0)
  double detector_radius = 1.0;     ///< mm
  std::uint64_t n_photons = 100000;
  double w_min = 1e-3;
  double p_survive = 0.1;
  bool roulette = true;
  double t_window = 1.0; ///< ns
  std::size_t n_bins = 200;
  double pulse_fwhm = 0.1;   ///< ns
  double pulse_center = 0.15; ///< ns
  std::uint64_t rng_seed = 1;
  /// Score exits on the ring of radius d by the fraction of the circle the
  /// detector disk covers. Same expectation as the disk tally (the geometry is
  /// symmetric about the source axis) with ~pi d / r_d times more scored packets.
  bool ring_detector = true;
  /// Stop packets that can no longer reach the detector before the window
  /// closes; their weight is tallied as expired. Leaves the signal unchanged.
  bool horizon_cut = true;
  std::uint64_t max_scatter = 1000000;
  unsigned threads = 1;
  std::size_t chunk = 2048; ///< packets per work item (fixes the reduction order)
  bool progress = false;

  TimeGrid grid() const { return {0.0, t_window / static_cast<double>(n_bins), n_bins}; }
  void validate() const;
};

struct PhotonState {
  Vec3 position;
  Vec3 direction{0.0, 0.0, 1.0};
  double weight = 1.0;
  double time = 0.0; ///< ns
};

enum class Termination : std::size_t { Detected = 0, Escaped = 1, Expired = 2, Rouletted = 3 };

/// Per-worker accumulator. Merging tallies in a fixed order gives identical
/// results for any thread count.
struct Tally {
  std::vector<double> bins;
  std::array<std::uint64_t, 4> count{};
  std::array<double, 4> weight{};
  std::uint64_t launched = 0;
  std::uint64_t guard_hits = 0; ///< packets stopped by the scattering-event cap
  double detected_sq = 0.0;     ///< sum of squared per-packet detected weights

  /// Standard error of the total detected weight, treating packets as i.i.d.
  double detected_standard_error() const;

  explicit Tally(std::size_t n_bins = 0) : bins(n_bins, 0.0) {}
  void merge(const Tally &other);
  std::uint64_t count_of(Termination t) const { return count[static_cast<std::size_t>(t)]; }
  double weight_of(Termination t) const { return weight[static_cast<std::size_t>(t)]; }
};

using RunStats = Tally;

PhotonState launch(const McConfig &cfg, CounterRng &rng);

/// Inverse-CDF free path -ln(xi) / mu_s for xi in (0, 1].
double free_path(double mu_s, double xi);
double sample_free_path(double mu_s, CounterRng &rng);

/// Henyey-Greenstein deflection cosine for a uniform xi in [0, 1).
double hg_cosine(double g, double xi);
Vec3 scatter_hg(const Vec3 &direction, double g, CounterRng &rng);

/// Returns false if the packet is killed. Survivors below w_min get weight / p.
bool roulette(PhotonState &photon, const McConfig &cfg, CounterRng &rng);

/// Straight move with Beer-Lambert attenuation exp(-mu_a len) and time advance.
void advance(PhotonState &photon, double len, double mu_a, double speed);

/// Fraction of the circle of radius rho (about the source axis) that lies in
/// the detector disk of radius r_d centered at distance d.
double ring_fraction(double rho, double d, double r_d);

Termination transport_one(PhotonState &photon, const OpticalProperties &props, const McConfig &cfg,
                          CounterRng &rng, Tally &tally);

struct McResult {
  TpsfSignal signal;
  RunStats stats;
};

McResult run_mc(const OpticalProperties &props, const McConfig &cfg);

} // namespace tpsf::mc
