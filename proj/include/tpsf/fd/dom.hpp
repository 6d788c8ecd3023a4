#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Core>

#include <tpsf/core/types.hpp>

/// Two-dimensional discrete-ordinates finite-difference solver for the
/// time-dependent radiative transfer equation.
namespace tpsf::fd {

enum class Boundary {
  Vacuum,   ///< zero incoming radiance on every edge
  Periodic, ///< wrap-around, only meant for conservation tests
};

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

struct DomConfig {
  std::size_t n_angles = 16;
  std::size_t nx = 61; ///< grid nodes along x (node spacing lx / (nx - 1))
  std::size_t ny = 31;
  double lx = 60.0; ///< mm
  double ly = 30.0;
  double cfl_fraction = 0.5;
  double t_end = 1.0;     ///< ns
  double time_step = 0.0; ///< ns; 0 selects cfl_fraction times the stability limit
  Point2 source_pos{25.0, 0.0};
  Point2 detector_pos{35.0, 0.0};
  double separation = 10.0;     ///< required |source_pos - detector_pos|, mm
  double detector_width = 2.0;  ///< aperture length along the detector edge, mm
  double pulse_fwhm = 0.1;      ///< ns
  double pulse_center = 0.15;   ///< ns
  TimeGrid output{};            ///< grid the detected flux is re-binned onto
  /// Solve with isotropic scattering at mu_s = mu_s' instead of HG(g) at
  /// mu_s = mu_s' / (1 - g). Both share the same transport coefficient.
  bool isotropic_similarity = true;
  Boundary boundary = Boundary::Vacuum;
  unsigned threads = 1;

  double dx() const { return lx / static_cast<double>(nx - 1); }
  double dy() const { return ly / static_cast<double>(ny - 1); }
  void validate() const;
};

/// Discrete directions s_m = (cos phi_m, sin phi_m), phi_m = 2 pi m / M, with
/// equal weights 2 pi / M.
struct Directions {
  std::vector<double> sx;
  std::vector<double> sy;
  std::vector<double> weight;

  std::size_t size() const { return sx.size(); }
};

/// M must be even and >= 8; `allow_small` admits M = 4 for tests.
Directions build_directions(std::size_t n_angles, bool allow_small = false);

/// Column-stochastic M x M matrix: entry (m, m') is the probability of
/// scattering from direction m' into m under the 2D Henyey-Greenstein law.
Eigen::MatrixXd build_phase_matrix(std::size_t n_angles, double g);

/// Radiance u[m, i, j], stored direction-major with i fastest.
struct RadianceField {
  std::size_t n_angles = 0;
  std::size_t nx = 0;
  std::size_t ny = 0;
  std::vector<double> u;

  RadianceField() = default;
  RadianceField(std::size_t m, std::size_t x, std::size_t y, double fill = 0.0)
      : n_angles(m), nx(x), ny(y), u(m * x * y, fill) {}

  std::size_t cells() const { return nx * ny; }
  double &at(std::size_t m, std::size_t i, std::size_t j) { return u[(m * ny + j) * nx + i]; }
  double at(std::size_t m, std::size_t i, std::size_t j) const { return u[(m * ny + j) * nx + i]; }
  double total() const;
};

/// Coefficients the solver actually integrates with (mm^-1, mm/ns).
struct Medium {
  double mu_a = 0.0;
  double mu_s = 0.0;
  double g = 0.0;
  double speed = kSpeedOfLight / kDefaultRefractiveIndex;

  static Medium from(const OpticalProperties &props, bool isotropic_similarity);
};

struct FdRunStats {
  std::size_t steps = 0;
  double dt = 0.0;
  std::size_t clamped = 0;    ///< negative undershoots reset to zero
  bool clamp_warning = false; ///< clamped entries exceeded 0.1 % of all updates
};

class DomSolver {
public:
  DomSolver(const Medium &medium, const DomConfig &cfg);
  DomSolver(const OpticalProperties &props, const DomConfig &cfg);

  /// Advection-only CFL limit 1 / (v max_m(|sx|/dx + |sy|/dy)).
  double dt_cfl() const { return dt_cfl_; }
  /// Positivity limit including the collision terms; never above dt_cfl().
  double dt_stable() const { return dt_stable_; }
  /// Step actually used: t_end divided into whole steps no longer than the limit.
  double dt() const { return dt_; }
  std::size_t n_steps() const { return n_steps_; }

  const Directions &directions() const { return dirs_; }
  const Eigen::MatrixXd &phase_matrix() const { return phase_; }
  RadianceField zero_field() const { return {dirs_.size(), cfg_.nx, cfg_.ny}; }

  /// Source strength q(t) in photons/ns: unit-area Gaussian pulse.
  double pulse(double t) const;

  /// One explicit Euler step from time t; `source_weight` scales the pulse
  /// (0 switches the source off). Returns the number of clamped entries.
  std::size_t step_into(const RadianceField &in, RadianceField &out, double t, double source_weight = 1.0) const;
  RadianceField step(const RadianceField &in, double t, double source_weight = 1.0) const;

  /// Outgoing flux through the detector aperture, sum over s.n > 0 of w s.n u.
  double detector_flux(const RadianceField &field) const;

  TpsfSignal run(FdRunStats *stats = nullptr) const;
  /// Integrates from `field` at t = 0 with the pulse scaled by source_weight.
  TpsfSignal propagate(RadianceField field, double source_weight, FdRunStats *stats = nullptr) const;

private:
  void scatter_gather(const RadianceField &in, std::vector<double> &gathered) const;

  Medium medium_;
  DomConfig cfg_;
  Directions dirs_;
  Eigen::MatrixXd phase_;
  bool isotropic_ = false;
  double dt_cfl_ = 0.0;
  double dt_stable_ = 0.0;
  double dt_ = 0.0;
  std::size_t n_steps_ = 0;
  std::size_t src_i_ = 0, src_j_ = 0;
  // Detector aperture: boundary nodes, their face overlap lengths, outward normal.
  std::vector<std::size_t> det_nodes_;
  std::vector<double> det_lengths_;
  double det_nx_ = 0.0, det_ny_ = 0.0;
};

TpsfSignal run_fd(const OpticalProperties &props, const DomConfig &cfg, FdRunStats *stats = nullptr);

/// Adds `amount` spread uniformly over [a, b) to the overlapping bins of `grid`.
void accumulate_interval(std::vector<double> &bins, const TimeGrid &grid, double a, double b, double amount);

} // namespace tpsf::fd
