#include <doctest.h>

#include <cmath>
#include <numbers>

#include <tpsf/core/error.hpp>
#include <tpsf/fd/dom.hpp>
#include <tpsf/sigproc/sigproc.hpp>

using namespace tpsf;
using namespace tpsf::fd;

namespace {

DomConfig periodic_box(std::size_t n) {
  DomConfig cfg;
  cfg.n_angles = 16;
  cfg.nx = cfg.ny = n;
  cfg.lx = cfg.ly = static_cast<double>(n - 1);
  cfg.source_pos = {2.0, 0.0};
  cfg.detector_pos = {5.0, 0.0};
  cfg.separation = 3.0;
  cfg.boundary = Boundary::Periodic;
  cfg.t_end = 0.05;
  return cfg;
}

// Full width at half maximum with linear interpolation between bin centers.
double fwhm(const TpsfSignal &s) {
  const double half = 0.5 * s.peak();
  std::size_t k = 0;
  while (s.values[k] < half)
    ++k;
  std::size_t j = s.size() - 1;
  while (s.values[j] < half)
    --j;
  auto cross = [&](std::size_t a, std::size_t b) {
    const double f = (half - s.values[a]) / (s.values[b] - s.values[a]);
    return s.bin_center(a) + f * (s.bin_center(b) - s.bin_center(a));
  };
  const double left = k == 0 ? s.bin_center(0) : cross(k - 1, k);
  const double right = j + 1 == s.size() ? s.bin_center(j) : cross(j + 1, j);
  return right - left;
}

double l2_diff(const TpsfSignal &a, const TpsfSignal &b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    acc += (a.values[i] - b.values[i]) * (a.values[i] - b.values[i]);
  return std::sqrt(acc * a.dt);
}

} // namespace

TEST_CASE("directions") {
  const auto d4 = build_directions(4, true);
  const double ex[] = {1, 0, -1, 0}, ey[] = {0, 1, 0, -1};
  for (std::size_t m = 0; m < 4; ++m) {
    CHECK(d4.sx[m] == ex[m]);
    CHECK(d4.sy[m] == ey[m]);
  }
  for (std::size_t M : {8u, 16u, 32u, 64u}) {
    const auto d = build_directions(M);
    double wx = 0, wy = 0, w = 0;
    for (std::size_t m = 0; m < M; ++m) {
      wx += d.weight[m] * d.sx[m];
      wy += d.weight[m] * d.sy[m];
      w += d.weight[m];
      CHECK(std::hypot(d.sx[m], d.sy[m]) == doctest::Approx(1.0).epsilon(1e-15));
    }
    CHECK(std::abs(wx) < 1e-13);
    CHECK(std::abs(wy) < 1e-13);
    CHECK(std::abs(w - 2.0 * std::numbers::pi) < 1e-12);
  }
  CHECK_THROWS_AS(build_directions(4), Error);
  CHECK_THROWS_AS(build_directions(9), Error);
}

TEST_CASE("phase matrix") {
  const auto iso = build_phase_matrix(16, 0.0);
  CHECK((iso.array() - 1.0 / 16.0).abs().maxCoeff() < 1e-15);

  for (double g : {0.0, 0.5, 0.9})
    for (std::size_t M : {16u, 32u, 64u}) {
      const auto P = build_phase_matrix(M, g);
      CHECK((P.colwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
      CHECK(P.minCoeff() >= 0.0);
    }

  // Columns are the 2D HG density at the angular offsets, rescaled to sum to 1.
  const double g = 0.8;
  const std::size_t M = 32;
  const auto P = build_phase_matrix(M, g);
  for (std::size_t mp = 0; mp < M; ++mp) {
    double norm = 0.0;
    std::vector<double> hg(M);
    for (std::size_t m = 0; m < M; ++m) {
      const double theta = 2.0 * std::numbers::pi * (double(m) - double(mp)) / double(M);
      hg[m] = (1 - g * g) / (2 * std::numbers::pi * (1 + g * g - 2 * g * std::cos(theta)));
      norm += hg[m];
    }
    for (std::size_t m = 0; m < M; ++m) {
      CHECK(P(Eigen::Index(m), Eigen::Index(mp)) == doctest::Approx(hg[m] / norm).epsilon(1e-12));
      if (m != mp)
        CHECK(P(Eigen::Index(mp), Eigen::Index(mp)) > P(Eigen::Index(m), Eigen::Index(mp)));
    }
  }
  CHECK_THROWS_AS(build_phase_matrix(16, 1.0), Error);
}

TEST_CASE("isotropic scattering keeps the per-cell angular sum") {
  const auto P = build_phase_matrix(16, 0.0);
  Eigen::VectorXd u = Eigen::VectorXd::LinSpaced(16, 0.1, 3.0).array().square();
  CHECK(std::abs((P * u).sum() - u.sum()) < 1e-12 * u.sum());
}

TEST_CASE("pure absorption decays a uniform field geometrically") {
  DomConfig cfg = periodic_box(16);
  const Medium medium{0.02, 0.0, 0.0, kSpeedOfLight / 1.33};
  const DomSolver solver(medium, cfg);
  RadianceField u(16, 16, 16, 1.3);
  const double factor = 1.0 - medium.speed * solver.dt() * medium.mu_a;
  double expected = 1.3;
  for (int k = 1; k <= 60; ++k) {
    u = solver.step(u, 0.0, 0.0);
    expected *= factor;
    for (double v : u.u)
      REQUIRE(std::abs(v - expected) <= 1e-14 * expected * k);
  }
}

TEST_CASE("periodic box without absorption conserves the total") {
  DomConfig cfg = periodic_box(16);
  for (double g : {0.0, 0.5}) {
    const Medium medium{0.0, 1.5, g, kSpeedOfLight / 1.33};
    const DomSolver solver(medium, cfg);
    RadianceField u(16, 16, 16);
    CounterRng rng(11);
    for (auto &v : u.u)
      v = rng.uniform();
    double total = u.total();
    for (int k = 0; k < 40; ++k) {
      u = solver.step(u, 0.0, 0.0);
      const double now = u.total();
      CHECK(std::abs(now - total) <= 1e-10 * total);
      total = now;
    }
  }
}

TEST_CASE("time step selection and stability checks") {
  DomConfig cfg;
  const OpticalProperties props(0.01, 1.0);
  const DomSolver solver(props, cfg);
  CHECK(solver.dt_stable() <= solver.dt_cfl());
  CHECK(solver.dt() <= cfg.cfl_fraction * solver.dt_stable() * (1 + 1e-12));
  CHECK(solver.dt() * double(solver.n_steps()) == doctest::Approx(cfg.t_end));

  cfg.time_step = 2.0 * solver.dt();
  CHECK_THROWS_AS(DomSolver(props, cfg), Error);
  cfg.time_step = 0.5 * solver.dt();
  CHECK(DomSolver(props, cfg).dt() == cfg.time_step);

  DomConfig bad;
  bad.separation = 12.0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = DomConfig{};
  bad.detector_pos = {35.0, 5.0};
  bad.separation = std::hypot(10.0, 5.0);
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = DomConfig{};
  bad.n_angles = 6;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = DomConfig{};
  bad.cfl_fraction = 1.5;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("conservative re-binning") {
  const TimeGrid grid{0.0, 0.1, 10};
  std::vector<double> bins(10, 0.0);
  accumulate_interval(bins, grid, 0.05, 0.37, 3.2);
  double sum = 0.0;
  for (double b : bins)
    sum += b;
  CHECK(sum == doctest::Approx(3.2).epsilon(1e-14));
  CHECK(bins[0] == doctest::Approx(0.5));
  CHECK(bins[3] == doctest::Approx(0.7));

  std::vector<double> edge(10, 0.0);
  accumulate_interval(edge, grid, 0.9, 1.1, 2.0);
  CHECK(edge[9] == doctest::Approx(1.0));
  accumulate_interval(edge, grid, 1.5, 1.6, 2.0);
  CHECK(edge[9] == doctest::Approx(1.0));
}

TEST_CASE("run_fd produces a smooth deterministic TPSF") {
  const OpticalProperties props(0.01, 1.0);
  DomConfig cfg;
  FdRunStats stats;
  const auto a = run_fd(props, cfg, &stats);
  CHECK(stats.clamped == 0);
  CHECK_FALSE(stats.clamp_warning);
  CHECK_NOTHROW(a.validate());
  CHECK(a.size() == 200);
  CHECK(a == run_fd(props, cfg));
  cfg.threads = 4;
  CHECK(a == run_fd(props, cfg));

  // Strictly positive once light has had time to cross the 10 mm gap.
  const double arrival = cfg.pulse_center + 10.0 / props.speed();
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a.bin_center(i) > arrival)
      REQUIRE(a.values[i] > 0.0);
}

TEST_CASE("absorption steepens the late-time decay") {
  const DomConfig cfg;
  const auto m1 = sig::asymptotic_slope(run_fd(OpticalProperties(0.005, 1.0), cfg));
  const auto m2 = sig::asymptotic_slope(run_fd(OpticalProperties(0.010, 1.0), cfg));
  const auto m3 = sig::asymptotic_slope(run_fd(OpticalProperties(0.020, 1.0), cfg));
  CHECK(m2 < m1);
  CHECK(m3 < m2);
  // Pure attenuation shifts the slope by v * delta mu_a at late times.
  const double v = kSpeedOfLight / 1.33;
  CHECK(m1 - m2 == doctest::Approx(v * 0.005).epsilon(0.05));
}

TEST_CASE("detected pulse is no narrower than the source pulse") {
  DomConfig cfg;
  const auto s = run_fd(OpticalProperties(0.01, 0.5), cfg);
  CHECK(fwhm(s) >= cfg.pulse_fwhm);
}

TEST_CASE("grid refinement converges") {
  // Smooth case: an isotropic Gaussian blob of light in a scattering box,
  // propagated on three nested grids with dt tied to the spacing through the
  // stability limit. The detector flux is compared on a common time grid.
  std::vector<TpsfSignal> out;
  for (std::size_t level = 2; level < 5; ++level) {
    DomConfig cfg;
    cfg.n_angles = 16;
    cfg.lx = 16.0;
    cfg.ly = 8.0;
    cfg.nx = 16 * (1u << level) + 1;
    cfg.ny = 8 * (1u << level) + 1;
    cfg.source_pos = {6.0, 0.0};
    cfg.detector_pos = {10.0, 0.0};
    cfg.separation = 4.0;
    cfg.t_end = 0.2;
    cfg.output = TimeGrid{0.0, 0.01, 20};
    const DomSolver solver(OpticalProperties(0.01, 1.0), cfg);
    RadianceField u = solver.zero_field();
    for (std::size_t m = 0; m < u.n_angles; ++m)
      for (std::size_t j = 0; j < u.ny; ++j)
        for (std::size_t i = 0; i < u.nx; ++i) {
          const double x = double(i) * cfg.dx() - 8.0, y = double(j) * cfg.dy() - 4.0;
          u.at(m, i, j) = std::exp(-(x * x + y * y) / 8.0);
        }
    out.push_back(solver.propagate(std::move(u), 0.0));
  }
  const double e1 = l2_diff(out[0], out[1]);
  const double e2 = l2_diff(out[1], out[2]);
  const double order = std::log2(e1 / e2);
  MESSAGE("observed order " << order);
  CHECK(e2 < e1);
  CHECK(order >= 0.8);
}
