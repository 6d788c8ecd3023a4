#include <tpsf/mc/photon_mc.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iostream>
#include <limits>
#include <numbers>

#include <tpsf/core/error.hpp>
#include <tpsf/core/parallel.hpp>

namespace tpsf::mc {
namespace {

enum class Face { None, Top, Bottom, Side };

struct Hit {
  double distance = std::numeric_limits<double>::infinity();
  Face face = Face::None;
};

// Nearest boundary along the ray. Faces win ties with the lateral surface.
Hit nearest_boundary(const PhotonState &p, const McConfig &cfg) {
  Hit hit;
  const Vec3 &r = p.position;
  const Vec3 &d = p.direction;
  if (d.z < 0.0)
    hit = {std::max(0.0, -r.z / d.z), Face::Top};
  else if (d.z > 0.0)
    hit = {std::max(0.0, (cfg.cyl_height - r.z) / d.z), Face::Bottom};

  const double a = d.x * d.x + d.y * d.y;
  if (a > 1e-300) {
    const double b = r.x * d.x + r.y * d.y;
    const double c = r.x * r.x + r.y * r.y - cfg.cyl_radius * cfg.cyl_radius;
    const double disc = std::max(0.0, b * b - a * c);
    const double t = std::max(0.0, (-b + std::sqrt(disc)) / a);
    if (t < hit.distance)
      hit = {t, Face::Side};
  }
  return hit;
}

// Distance to the closest cylinder surface in any direction; a step shorter
// than this cannot leave the medium.
double inner_distance(const PhotonState &p, const McConfig &cfg, double rho) {
  return std::min({p.position.z, cfg.cyl_height - p.position.z, cfg.cyl_radius - rho});
}

// True if a straight path to the detector footprint on z = 0 fits in the
// remaining time. The footprint is the annulus |rho - d| <= r_d for the ring
// estimator (which contains the disk), so the test is conservative for both.
bool can_reach_detector(const PhotonState &p, const McConfig &cfg, double v, double t_max, double rho) {
  const double budget = v * (t_max - p.time);
  const double gap = std::max(0.0, std::abs(rho - cfg.src_det_separation) - cfg.detector_radius);
  return gap * gap + p.position.z * p.position.z <= budget * budget;
}

void record(Tally &tally, Termination t, double w) {
  tally.count[static_cast<std::size_t>(t)] += 1;
  tally.weight[static_cast<std::size_t>(t)] += w;
}

} // namespace

double Vec3::norm() const { return std::sqrt(x * x + y * y + z * z); }

void McConfig::validate() const {
  require(cyl_radius > 0 && cyl_height > 0 && fiber_radius > 0 && detector_radius > 0 && src_det_separation > 0,
          "cylinder, fiber and detector dimensions must be positive");
  require(src_det_separation + detector_radius < cyl_radius, "detector must lie inside the top face");
  require(cone_half_angle_deg >= 0.0 && cone_half_angle_deg < 90.0, "cone half-angle must lie in [0, 90) degrees");
  require(p_survive > 0.0 && p_survive < 1.0, "p_survive must lie in (0, 1)");
  require(w_min > 0.0 && w_min < 1.0, "w_min must lie in (0, 1)");
  require(n_photons >= 1, "n_photons must be at least 1");
  require(t_window > 0.0 && n_bins >= 1, "time window must be non-empty");
  require(pulse_fwhm > 0.0, "pulse_fwhm must be positive");
  require(chunk >= 1, "chunk must be at least 1");
}

void Tally::merge(const Tally &other) {
  if (bins.size() < other.bins.size())
    bins.resize(other.bins.size(), 0.0);
  for (std::size_t i = 0; i < other.bins.size(); ++i)
    bins[i] += other.bins[i];
  for (std::size_t k = 0; k < 4; ++k) {
    count[k] += other.count[k];
    weight[k] += other.weight[k];
  }
  launched += other.launched;
  guard_hits += other.guard_hits;
  detected_sq += other.detected_sq;
}

double Tally::detected_standard_error() const {
  if (launched == 0)
    return 0.0;
  const double n = static_cast<double>(launched);
  const double mean = weight_of(Termination::Detected) / n;
  return std::sqrt(std::max(0.0, n * (detected_sq / n - mean * mean)));
}

PhotonState launch(const McConfig &cfg, CounterRng &rng) {
  PhotonState p;
  const double r = cfg.fiber_radius * std::sqrt(rng.uniform());
  const double phi = 2.0 * std::numbers::pi * rng.uniform();
  p.position = {r * std::cos(phi), r * std::sin(phi), 0.0};

  // Uniform in solid angle inside the cone: cos(theta) uniform on [cos(max), 1].
  const double cos_max = std::cos(cfg.cone_half_angle_deg * std::numbers::pi / 180.0);
  const double cos_t = 1.0 - rng.uniform() * (1.0 - cos_max);
  const double sin_t = std::sqrt(std::max(0.0, 1.0 - cos_t * cos_t));
  const double psi = 2.0 * std::numbers::pi * rng.uniform();
  p.direction = {sin_t * std::cos(psi), sin_t * std::sin(psi), cos_t};

  const double sigma = cfg.pulse_fwhm / (2.0 * std::sqrt(2.0 * std::numbers::ln2));
  p.time = cfg.pulse_center + sigma * rng.normal();
  p.weight = 1.0;
  return p;
}

double free_path(double mu_s, double xi) {
  require(mu_s > 0.0, "scattering coefficient must be positive");
  return -std::log(xi) / mu_s;
}

double sample_free_path(double mu_s, CounterRng &rng) { return free_path(mu_s, rng.uniform_pos()); }

double hg_cosine(double g, double xi) {
  if (g == 0.0)
    return 2.0 * xi - 1.0;
  const double tmp = (1.0 - g * g) / (1.0 - g + 2.0 * g * xi);
  return std::clamp((1.0 + g * g - tmp * tmp) / (2.0 * g), -1.0, 1.0);
}

Vec3 scatter_hg(const Vec3 &d, double g, CounterRng &rng) {
  const double cos_t = hg_cosine(g, rng.uniform());
  const double sin_t = std::sqrt(std::max(0.0, 1.0 - cos_t * cos_t));
  // Uniform azimuth without trig: a point uniform in the unit disk gives
  // (cos psi, sin psi) = ((a^2 - b^2), 2ab) / (a^2 + b^2).
  double a, b, r2;
  do {
    const std::uint64_t bits = rng();
    a = static_cast<double>(bits >> 32) * 0x1.0p-31 - 1.0;
    b = static_cast<double>(bits & 0xFFFFFFFFu) * 0x1.0p-31 - 1.0;
    r2 = a * a + b * b;
  } while (r2 > 1.0 || r2 < 1e-12);
  const double inv_r2 = 1.0 / r2;
  const double cos_p = (a * a - b * b) * inv_r2, sin_p = 2.0 * a * b * inv_r2;

  Vec3 out;
  if (std::abs(d.z) > 1.0 - 1e-12) {
    out = {sin_t * cos_p, sin_t * sin_p, std::copysign(cos_t, d.z)};
  } else {
    const double s = std::sqrt(1.0 - d.z * d.z);
    const double k = sin_t / s;
    out.x = k * (d.x * d.z * cos_p - d.y * sin_p) + d.x * cos_t;
    out.y = k * (d.y * d.z * cos_p + d.x * sin_p) + d.y * cos_t;
    out.z = -sin_t * cos_p * s + d.z * cos_t;
  }
  // One Newton step towards unit length; the drift per scatter is a few ulps.
  const double inv = 0.5 * (3.0 - (out.x * out.x + out.y * out.y + out.z * out.z));
  return {out.x * inv, out.y * inv, out.z * inv};
}

bool roulette(PhotonState &photon, const McConfig &cfg, CounterRng &rng) {
  if (photon.weight >= cfg.w_min)
    return true;
  if (rng.uniform() < cfg.p_survive) {
    photon.weight /= cfg.p_survive;
    return true;
  }
  return false;
}

void advance(PhotonState &photon, double len, double mu_a, double speed) {
  photon.position.x += photon.direction.x * len;
  photon.position.y += photon.direction.y * len;
  photon.position.z += photon.direction.z * len;
  photon.weight *= std::exp(-mu_a * len);
  photon.time += len / speed;
}

double ring_fraction(double rho, double d, double r_d) {
  if (rho <= 0.0 || std::abs(rho - d) >= r_d)
    return 0.0;
  const double c = (rho * rho + d * d - r_d * r_d) / (2.0 * rho * d);
  return std::acos(std::clamp(c, -1.0, 1.0)) / std::numbers::pi;
}

Termination transport_one(PhotonState &photon, const OpticalProperties &props, const McConfig &cfg,
                          CounterRng &rng, Tally &tally) {
  const double mu_s = props.mu_s();
  const double mu_a = props.mu_a();
  const double v = props.speed();
  const double inv_v = 1.0 / v;
  const TimeGrid grid = cfg.grid();
  const double t_max = grid.t_end();
  constexpr double kInf = std::numeric_limits<double>::infinity();

  // Absorption is folded into the weight lazily: `pending` is the path length
  // travelled since the last update, and `pending_limit` the length at which
  // the weight would fall below w_min.
  double pending = 0.0;
  auto settle = [&] {
    if (pending > 0.0)
      photon.weight *= std::exp(-mu_a * pending);
    pending = 0.0;
  };
  auto limit = [&] {
    if (photon.weight < cfg.w_min)
      return 0.0;
    return mu_a > 0.0 ? std::log(photon.weight / cfg.w_min) / mu_a : kInf;
  };
  double pending_limit = cfg.roulette ? limit() : kInf;
  auto finish = [&](Termination t) {
    settle();
    record(tally, t, photon.weight);
    return t;
  };
  auto move = [&](double len) {
    photon.position.x += photon.direction.x * len;
    photon.position.y += photon.direction.y * len;
    photon.position.z += photon.direction.z * len;
    photon.time += len * inv_v;
    pending += len;
  };
  auto radius = [&] { return std::sqrt(photon.position.x * photon.position.x + photon.position.y * photon.position.y); };
  double rho = radius();

  for (std::uint64_t events = 0;; ++events) {
    if (events >= cfg.max_scatter) {
      ++tally.guard_hits;
      return finish(Termination::Expired);
    }

    const double step = sample_free_path(mu_s, rng);
    const Hit hit = step < inner_distance(photon, cfg, rho) ? Hit{} : nearest_boundary(photon, cfg);
    const bool exits = hit.distance <= step;
    const double len = exits ? hit.distance : step;

    if (photon.time + len * inv_v >= t_max) {
      move(std::max(0.0, (t_max - photon.time) * v));
      return finish(Termination::Expired);
    }
    move(len);

    if (exits) {
      settle();
      double fraction = 0.0;
      if (hit.face == Face::Top) {
        photon.position.z = 0.0;
        const double d = cfg.src_det_separation, rd = cfg.detector_radius;
        if (cfg.ring_detector) {
          const double rho = std::sqrt(photon.position.x * photon.position.x + photon.position.y * photon.position.y);
          fraction = ring_fraction(rho, d, rd);
        } else {
          const double ex = photon.position.x - d, ey = photon.position.y;
          fraction = ex * ex + ey * ey <= rd * rd ? 1.0 : 0.0;
        }
        if (photon.time < grid.t_start)
          fraction = 0.0;
      }
      if (fraction > 0.0) {
        const double w = photon.weight * fraction;
        const auto bin = std::min(grid.n_bins - 1,
                                  static_cast<std::size_t>((photon.time - grid.t_start) / grid.dt));
        tally.bins[bin] += w;
        record(tally, Termination::Detected, w);
        tally.detected_sq += w * w;
        tally.weight[static_cast<std::size_t>(Termination::Escaped)] += photon.weight - w;
        return Termination::Detected;
      }
      return finish(Termination::Escaped);
    }

    rho = radius();
    if (cfg.horizon_cut && !can_reach_detector(photon, cfg, v, t_max, rho))
      return finish(Termination::Expired);

    photon.direction = scatter_hg(photon.direction, props.g(), rng);
    if (pending >= pending_limit) {
      settle();
      const double before = photon.weight;
      if (!roulette(photon, cfg, rng)) {
        record(tally, Termination::Rouletted, before);
        return Termination::Rouletted;
      }
      pending_limit = limit();
    }
  }
}

McResult run_mc(const OpticalProperties &props, const McConfig &cfg) {
  cfg.validate();
  const std::size_t n_chunks = static_cast<std::size_t>((cfg.n_photons + cfg.chunk - 1) / cfg.chunk);
  std::vector<Tally> partial(n_chunks, Tally(cfg.n_bins));
  std::atomic<std::size_t> done{0};

  parallel_for(n_chunks, cfg.threads, [&](std::size_t c) {
    Tally &tally = partial[c];
    const std::uint64_t first = static_cast<std::uint64_t>(c) * cfg.chunk;
    const std::uint64_t last = std::min<std::uint64_t>(cfg.n_photons, first + cfg.chunk);
    for (std::uint64_t k = first; k < last; ++k) {
      CounterRng rng(cfg.rng_seed, k);
      PhotonState p = launch(cfg, rng);
      ++tally.launched;
      transport_one(p, props, cfg, rng, tally);
    }
    if (cfg.progress) {
      const std::size_t n = ++done;
      if (n == n_chunks || n % std::max<std::size_t>(1, n_chunks / 10) == 0)
        std::cerr << "mc: " << n << "/" << n_chunks << " chunks\n";
    }
  });

  Tally total(cfg.n_bins);
  for (const auto &t : partial)
    total.merge(t);
  if (total.guard_hits > 0)
    std::cerr << "mc: warning: " << total.guard_hits << " packets hit the scattering-event cap\n";
  return {TpsfSignal(total.bins, cfg.grid()), total};
}

} // namespace tpsf::mc
