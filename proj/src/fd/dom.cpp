#include <tpsf/fd/dom.hpp>

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numbers>
#include <string>

#include <tpsf/core/error.hpp>
#include <tpsf/core/parallel.hpp>

namespace tpsf::fd {
namespace {

constexpr double kNegativeTolerance = 1e-12;

std::size_t node_index(double pos, double spacing, std::size_t n, const char *what) {
  const double r = pos / spacing;
  const auto k = static_cast<long long>(std::llround(r));
  require(k >= 0 && static_cast<std::size_t>(k) < n, std::string(what) + " lies outside the grid");
  return static_cast<std::size_t>(k);
}

bool on(double v, double edge) { return std::abs(v - edge) < 1e-9; }

} // namespace

void DomConfig::validate() const {
  require(n_angles >= 8 && n_angles % 2 == 0, "n_angles must be even and >= 8");
  require(nx >= 8 && ny >= 8, "grid needs at least 8 nodes per axis");
  require(lx > 0.0 && ly > 0.0, "domain lengths must be positive");
  require(cfl_fraction > 0.0 && cfl_fraction <= 1.0, "cfl_fraction must lie in (0, 1]");
  require(t_end > 0.0, "t_end must be positive");
  require(time_step >= 0.0, "time_step must be non-negative");
  require(pulse_fwhm > 0.0, "pulse_fwhm must be positive");
  require(detector_width > 0.0, "detector_width must be positive");
  require(output.dt > 0.0 && output.n_bins > 0, "output grid must be non-empty");
  const double rho = std::hypot(source_pos.x - detector_pos.x, source_pos.y - detector_pos.y);
  require(std::abs(rho - separation) < 1e-9,
          "source-detector distance " + std::to_string(rho) + " differs from separation " + std::to_string(separation));
  for (const auto &p : {source_pos, detector_pos})
    require(p.x >= 0.0 && p.x <= lx && p.y >= 0.0 && p.y <= ly, "source/detector must lie inside the domain");
  require(on(detector_pos.x, 0.0) || on(detector_pos.x, lx) || on(detector_pos.y, 0.0) || on(detector_pos.y, ly),
          "detector must sit on a domain edge");
}

Directions build_directions(std::size_t n_angles, bool allow_small) {
  require(n_angles % 2 == 0 && (n_angles >= 8 || (allow_small && n_angles >= 4)),
          "number of directions must be even and >= 8");
  Directions d;
  d.sx.resize(n_angles);
  d.sy.resize(n_angles);
  d.weight.assign(n_angles, 2.0 * std::numbers::pi / static_cast<double>(n_angles));
  auto snap = [](double v) { return std::abs(v) < 1e-14 ? 0.0 : v; };
  for (std::size_t m = 0; m < n_angles; ++m) {
    const double phi = 2.0 * std::numbers::pi * static_cast<double>(m) / static_cast<double>(n_angles);
    d.sx[m] = snap(std::cos(phi));
    d.sy[m] = snap(std::sin(phi));
  }
  return d;
}

Eigen::MatrixXd build_phase_matrix(std::size_t n_angles, double g) {
  require(n_angles >= 2, "phase matrix needs at least two directions");
  require(g >= 0.0 && g < 1.0, "anisotropy must lie in [0, 1)");
  const auto M = static_cast<Eigen::Index>(n_angles);
  Eigen::MatrixXd p(M, M);
  const double w = 2.0 * std::numbers::pi / static_cast<double>(n_angles);
  for (Eigen::Index mp = 0; mp < M; ++mp) {
    for (Eigen::Index m = 0; m < M; ++m) {
      const double theta = 2.0 * std::numbers::pi * static_cast<double>(m - mp) / static_cast<double>(n_angles);
      p(m, mp) = w * (1.0 - g * g) / (2.0 * std::numbers::pi * (1.0 + g * g - 2.0 * g * std::cos(theta)));
    }
    p.col(mp) /= p.col(mp).sum();
  }
  return p;
}

double RadianceField::total() const {
  double s = 0.0;
  for (double v : u)
    s += v;
  return s;
}

Medium Medium::from(const OpticalProperties &props, bool isotropic_similarity) {
  if (isotropic_similarity)
    return {props.mu_a(), props.mu_s_prime(), 0.0, props.speed()};
  return {props.mu_a(), props.mu_s(), props.g(), props.speed()};
}

DomSolver::DomSolver(const OpticalProperties &props, const DomConfig &cfg)
    : DomSolver(Medium::from(props, cfg.isotropic_similarity), cfg) {}

DomSolver::DomSolver(const Medium &medium, const DomConfig &cfg) : medium_(medium), cfg_(cfg) {
  cfg_.validate();
  require(medium.mu_a >= 0.0 && medium.mu_s >= 0.0 && medium.speed > 0.0, "invalid medium coefficients");
  dirs_ = build_directions(cfg_.n_angles);
  phase_ = build_phase_matrix(cfg_.n_angles, medium.g);
  isotropic_ = medium.g == 0.0;

  const double dx = cfg_.dx(), dy = cfg_.dy();
  double adv_max = 0.0, rate_max = 0.0;
  for (std::size_t m = 0; m < dirs_.size(); ++m) {
    const double adv = std::abs(dirs_.sx[m]) / dx + std::abs(dirs_.sy[m]) / dy;
    const auto mi = static_cast<Eigen::Index>(m);
    adv_max = std::max(adv_max, adv);
    rate_max = std::max(rate_max, adv + medium.mu_a + medium.mu_s * (1.0 - phase_(mi, mi)));
  }
  dt_cfl_ = 1.0 / (medium.speed * adv_max);
  dt_stable_ = 1.0 / (medium.speed * rate_max);

  if (cfg_.time_step > 0.0) {
    if (cfg_.time_step > cfg_.cfl_fraction * dt_stable_)
      fail(ErrorCode::InvalidArgument, "time_step " + std::to_string(cfg_.time_step) +
                                           " ns violates the stability limit " +
                                           std::to_string(cfg_.cfl_fraction * dt_stable_) + " ns");
    dt_ = cfg_.time_step;
    n_steps_ = static_cast<std::size_t>(std::ceil(cfg_.t_end / dt_ - 1e-9));
  } else {
    n_steps_ = static_cast<std::size_t>(std::ceil(cfg_.t_end / (cfg_.cfl_fraction * dt_stable_)));
    dt_ = cfg_.t_end / static_cast<double>(n_steps_);
  }

  src_i_ = node_index(cfg_.source_pos.x, dx, cfg_.nx, "source");
  src_j_ = node_index(cfg_.source_pos.y, dy, cfg_.ny, "source");

  // Aperture along the edge the detector sits on; each boundary node owns a face
  // of one grid spacing centered on it.
  const bool horizontal_edge = on(cfg_.detector_pos.y, 0.0) || on(cfg_.detector_pos.y, cfg_.ly);
  const double half = 0.5 * cfg_.detector_width;
  if (horizontal_edge) {
    det_ny_ = on(cfg_.detector_pos.y, 0.0) ? -1.0 : 1.0;
    const std::size_t j = det_ny_ < 0 ? 0 : cfg_.ny - 1;
    for (std::size_t i = 0; i < cfg_.nx; ++i) {
      const double xc = static_cast<double>(i) * dx;
      const double lo = std::max(xc - 0.5 * dx, std::max(0.0, cfg_.detector_pos.x - half));
      const double hi = std::min(xc + 0.5 * dx, std::min(cfg_.lx, cfg_.detector_pos.x + half));
      if (hi > lo) {
        det_nodes_.push_back(j * cfg_.nx + i);
        det_lengths_.push_back(hi - lo);
      }
    }
  } else {
    det_nx_ = on(cfg_.detector_pos.x, 0.0) ? -1.0 : 1.0;
    const std::size_t i = det_nx_ < 0 ? 0 : cfg_.nx - 1;
    for (std::size_t j = 0; j < cfg_.ny; ++j) {
      const double yc = static_cast<double>(j) * dy;
      const double lo = std::max(yc - 0.5 * dy, std::max(0.0, cfg_.detector_pos.y - half));
      const double hi = std::min(yc + 0.5 * dy, std::min(cfg_.ly, cfg_.detector_pos.y + half));
      if (hi > lo) {
        det_nodes_.push_back(j * cfg_.nx + i);
        det_lengths_.push_back(hi - lo);
      }
    }
  }
  require(!det_nodes_.empty(), "detector aperture covers no boundary node");
}

double DomSolver::pulse(double t) const {
  const double sigma = cfg_.pulse_fwhm / (2.0 * std::sqrt(2.0 * std::numbers::ln2));
  const double z = (t - cfg_.pulse_center) / sigma;
  return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * std::numbers::pi));
}

void DomSolver::scatter_gather(const RadianceField &in, std::vector<double> &gathered) const {
  const std::size_t cells = in.cells();
  const std::size_t M = in.n_angles;
  gathered.resize(isotropic_ ? cells : M * cells);
  if (isotropic_) {
    std::fill(gathered.begin(), gathered.end(), 0.0);
    for (std::size_t m = 0; m < M; ++m) {
      const double *um = in.u.data() + m * cells;
      for (std::size_t c = 0; c < cells; ++c)
        gathered[c] += um[c];
    }
    const double inv = 1.0 / static_cast<double>(M);
    for (auto &v : gathered)
      v *= inv;
    return;
  }
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const auto rows = static_cast<Eigen::Index>(M), cols = static_cast<Eigen::Index>(cells);
  Eigen::Map<const RowMat> u(in.u.data(), rows, cols);
  Eigen::Map<RowMat> out(gathered.data(), rows, cols);
  out.noalias() = phase_ * u;
}

std::size_t DomSolver::step_into(const RadianceField &in, RadianceField &out, double t, double source_weight) const {
  const std::size_t nx = cfg_.nx, ny = cfg_.ny, cells = nx * ny, M = dirs_.size();
  require(in.n_angles == M && in.nx == nx && in.ny == ny, "radiance field shape does not match solver");
  if (out.u.size() != in.u.size())
    out = RadianceField(M, nx, ny);

  std::vector<double> gathered;
  scatter_gather(in, gathered);

  const double vdt = medium_.speed * dt_;
  const double mu_t = medium_.mu_a + medium_.mu_s;
  // u += v dt S with S = q / (v 2 pi A): the emitted energy per step is q dt.
  const double src = source_weight * dt_ * pulse(t) / (2.0 * std::numbers::pi * cfg_.dx() * cfg_.dy());
  const std::size_t src_cell = src_j_ * nx + src_i_;
  const bool periodic = cfg_.boundary == Boundary::Periodic;

  std::vector<std::size_t> clamped(M, 0);
  parallel_for(M, cfg_.threads, [&](std::size_t m) {
    const double ax = std::abs(dirs_.sx[m]) / cfg_.dx();
    const double ay = std::abs(dirs_.sy[m]) / cfg_.dy();
    const bool from_left = dirs_.sx[m] > 0.0;
    const bool from_below = dirs_.sy[m] > 0.0;
    const double *u = in.u.data() + m * cells;
    const double *pu = isotropic_ ? gathered.data() : gathered.data() + m * cells;
    double *o = out.u.data() + m * cells;
    std::size_t neg = 0;
    for (std::size_t j = 0; j < ny; ++j) {
      // Upstream row; absent rows read as zero (no incoming radiance).
      const double *row = u + j * nx;
      const double *up_row = nullptr;
      if (from_below)
        up_row = j > 0 ? row - nx : (periodic ? u + (ny - 1) * nx : nullptr);
      else
        up_row = j + 1 < ny ? row + nx : (periodic ? u : nullptr);
      const double *prow = pu + j * nx;
      double *orow = o + j * nx;
      for (std::size_t i = 0; i < nx; ++i) {
        double ux;
        if (from_left)
          ux = i > 0 ? row[i - 1] : (periodic ? row[nx - 1] : 0.0);
        else
          ux = i + 1 < nx ? row[i + 1] : (periodic ? row[0] : 0.0);
        const double uy = up_row ? up_row[i] : 0.0;
        const double c = row[i];
        double v = c - vdt * (ax * (c - ux) + ay * (c - uy) + mu_t * c - medium_.mu_s * prow[i]);
        if (v < -kNegativeTolerance) {
          v = 0.0;
          ++neg;
        }
        orow[i] = v;
      }
    }
    if (src != 0.0)
      o[src_cell] += src;
    clamped[m] = neg;
  });

  std::size_t total = 0;
  for (auto c : clamped)
    total += c;
  return total;
}

RadianceField DomSolver::step(const RadianceField &in, double t, double source_weight) const {
  RadianceField out(in.n_angles, in.nx, in.ny);
  step_into(in, out, t, source_weight);
  return out;
}

double DomSolver::detector_flux(const RadianceField &field) const {
  const std::size_t cells = field.cells();
  double flux = 0.0;
  for (std::size_t m = 0; m < dirs_.size(); ++m) {
    const double sn = dirs_.sx[m] * det_nx_ + dirs_.sy[m] * det_ny_;
    if (sn <= 0.0)
      continue;
    double along = 0.0;
    for (std::size_t k = 0; k < det_nodes_.size(); ++k)
      along += det_lengths_[k] * field.u[m * cells + det_nodes_[k]];
    flux += dirs_.weight[m] * sn * along;
  }
  return flux;
}

TpsfSignal DomSolver::run(FdRunStats *stats) const { return propagate(zero_field(), 1.0, stats); }

TpsfSignal DomSolver::propagate(RadianceField field, double source_weight, FdRunStats *stats) const {
  RadianceField a = std::move(field), b = zero_field();
  require(a.u.size() == b.u.size(), "initial field shape does not match solver");
  std::vector<double> bins(cfg_.output.n_bins, 0.0);
  std::size_t clamped = 0;
  for (std::size_t k = 0; k < n_steps_; ++k) {
    const double t = static_cast<double>(k) * dt_;
    clamped += step_into(a, b, t, source_weight);
    std::swap(a, b);
    accumulate_interval(bins, cfg_.output, t, t + dt_, detector_flux(a) * dt_);
  }

  const double updates = static_cast<double>(n_steps_) * static_cast<double>(a.u.size());
  const bool warn = static_cast<double>(clamped) > 1e-3 * updates;
  if (warn)
    std::cerr << "fd: warning: " << clamped << " negative radiance values clamped\n";
  if (stats)
    *stats = {n_steps_, dt_, clamped, warn};
  return {std::move(bins), cfg_.output};
}

TpsfSignal run_fd(const OpticalProperties &props, const DomConfig &cfg, FdRunStats *stats) {
  return DomSolver(props, cfg).run(stats);
}

void accumulate_interval(std::vector<double> &bins, const TimeGrid &grid, double a, double b, double amount) {
  if (!(b > a) || amount == 0.0)
    return;
  const double lo = std::max(a, grid.t_start), hi = std::min(b, grid.t_end());
  if (hi <= lo)
    return;
  const double density = amount / (b - a);
  auto first = static_cast<std::size_t>(std::floor((lo - grid.t_start) / grid.dt));
  first = std::min(first, grid.n_bins - 1);
  for (std::size_t k = first; k < grid.n_bins; ++k) {
    const double left = grid.t_start + static_cast<double>(k) * grid.dt;
    const double right = left + grid.dt;
    if (left >= hi)
      break;
    const double overlap = std::min(hi, right) - std::max(lo, left);
    if (overlap > 0.0)
      bins[k] += density * overlap;
  }
}

} // namespace tpsf::fd
