#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <tpsf/core/error.hpp>
#include <tpsf/core/rng.hpp>
#include <tpsf/core/sampling.hpp>
#include <tpsf/fd/dom.hpp>
#include <tpsf/stats/stats.hpp>

using namespace tpsf;
using namespace tpsf::stats;

namespace {

// Sample covariance eigenvalues of a 3-column matrix from the characteristic
// polynomial, solved with the trigonometric form for three real roots.
std::array<double, 3> covariance_eigenvalues(const Eigen::MatrixXd &x) {
  const double n = double(x.rows());
  double mean[3] = {};
  for (int c = 0; c < 3; ++c) {
    for (int r = 0; r < x.rows(); ++r)
      mean[c] += x(r, c);
    mean[c] /= n;
  }
  double a[3][3] = {};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      for (int r = 0; r < x.rows(); ++r)
        a[i][j] += (x(r, i) - mean[i]) * (x(r, j) - mean[j]);
      a[i][j] /= n - 1.0;
    }
  const double tr = a[0][0] + a[1][1] + a[2][2];
  const double minors = a[0][0] * a[1][1] - a[0][1] * a[1][0] + a[0][0] * a[2][2] - a[0][2] * a[2][0] +
                        a[1][1] * a[2][2] - a[1][2] * a[2][1];
  const double det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) -
                     a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0]) +
                     a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
  // lambda^3 - tr lambda^2 + minors lambda - det = 0, shifted by tr / 3.
  const double q = tr / 3.0;
  const double p = (tr * tr - 3.0 * minors) / 9.0;
  const double r = (-2.0 * tr * tr * tr + 9.0 * tr * minors - 27.0 * det) / 54.0;
  std::array<double, 3> out{};
  if (p <= 0.0) {
    out.fill(q);
    return out;
  }
  const double phi = std::acos(std::clamp(-r / std::sqrt(p * p * p), -1.0, 1.0)) / 3.0;
  for (int k = 0; k < 3; ++k)
    out[k] = q + 2.0 * std::sqrt(p) * std::cos(phi - 2.0 * std::numbers::pi * k / 3.0);
  std::sort(out.begin(), out.end(), std::greater<>());
  return out;
}

LabeledDataset dataset_from_rows(const std::vector<std::vector<double>> &rows) {
  LabeledDataset ds;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    ds.signals.emplace_back(rows[i], TimeGrid{0.0, 0.1, rows[i].size()});
    ds.labels.emplace_back(0.001 * double(i + 1), 1.0);
  }
  return ds;
}

} // namespace

TEST_CASE("PCA of a matrix with covariance spectrum (4, 1, 0)") {
  Eigen::MatrixXd x(3, 3);
  const double s = 1.0 / std::sqrt(3.0);
  x << 2.0 + 5, s - 1, 7, -2.0 + 5, s - 1, 7, 0.0 + 5, -2.0 * s - 1, 7;
  const auto ev = covariance_eigenvalues(x);
  CHECK(ev[0] == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(ev[1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(ev[2]) < 1e-12);

  const auto pca = pca_explained_variance(x);
  REQUIRE(pca.explained_variance_ratio.size() == 3);
  CHECK(pca.explained_variance_ratio[0] == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(pca.explained_variance_ratio[1] == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(std::abs(pca.explained_variance_ratio[2]) < 1e-12);
  CHECK(pca.n_components_for(0.8) == 1);
  CHECK(pca.n_components_for(0.99) == 2);
}

TEST_CASE("PCA matches the characteristic-polynomial oracle on random data") {
  CounterRng rng(31);
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::MatrixXd x(12, 3);
    for (int r = 0; r < 12; ++r) {
      const double a = rng.normal(), b = rng.normal(), c = rng.normal();
      x(r, 0) = a;
      x(r, 1) = 0.5 * a + b;
      x(r, 2) = 0.2 * c - b;
    }
    const auto ev = covariance_eigenvalues(x);
    const double sum = ev[0] + ev[1] + ev[2];
    const auto pca = pca_explained_variance(x);
    for (int k = 0; k < 3; ++k)
      CHECK(pca.explained_variance_ratio[std::size_t(k)] == doctest::Approx(ev[std::size_t(k)] / sum).epsilon(1e-10));
  }
}

TEST_CASE("PCA invariants") {
  CounterRng rng(2);
  std::vector<std::vector<double>> rows(30, std::vector<double>(20));
  for (auto &row : rows)
    for (std::size_t i = 0; i < row.size(); ++i)
      row[i] = std::exp(-0.2 * double(i) * (1.0 + 0.3 * rng.uniform())) * (1.0 + 0.1 * rng.uniform());
  const auto pca = pca_explained_variance(dataset_from_rows(rows));
  double sum = 0.0;
  for (std::size_t i = 0; i < pca.explained_variance_ratio.size(); ++i) {
    CHECK(pca.explained_variance_ratio[i] >= 0.0);
    if (i > 0)
      CHECK(pca.explained_variance_ratio[i] <= pca.explained_variance_ratio[i - 1]);
    sum += pca.explained_variance_ratio[i];
  }
  CHECK(std::abs(sum - 1.0) < 1e-9);
  CHECK(std::abs(pca.cumulative.back() - 1.0) < 1e-9);

  auto shuffled = rows;
  shuffle(shuffled.begin(), shuffled.end(), rng);
  const auto p2 = pca_explained_variance(dataset_from_rows(shuffled));
  for (std::size_t i = 0; i < pca.explained_variance_ratio.size(); ++i)
    CHECK(std::abs(p2.explained_variance_ratio[i] - pca.explained_variance_ratio[i]) < 1e-9);
}

TEST_CASE("PCA degenerate cases") {
  const std::vector<double> base{0.1, 0.5, 1.0, 0.4, 0.05};
  std::vector<std::vector<double>> scaled;
  for (double c : {0.5, 1.0, 3.0, 10.0, 0.01}) {
    auto row = base;
    for (auto &v : row)
      v *= c;
    scaled.push_back(row);
  }
  CHECK(pca_explained_variance(dataset_from_rows(scaled)).explained_variance_ratio[0] ==
        doctest::Approx(1.0).epsilon(1e-9));

  const std::vector<std::vector<double>> same(3, {0.1, 0.7, 0.3});
  const auto d = pca_explained_variance(dataset_from_rows(same));
  CHECK(d.explained_variance_ratio[0] == 1.0);
  CHECK(d.explained_variance_ratio[1] == 0.0);
  CHECK(d.n_components_for(0.99) == 1);
  CHECK_THROWS_AS(pca_explained_variance(Eigen::MatrixXd::Ones(1, 4)), Error);
}

TEST_CASE("pearson correlation") {
  Eigen::MatrixXd data(6, 3);
  const std::vector<double> mu{0.002, 0.005, 0.007, 0.011, 0.016, 0.02};
  for (int r = 0; r < 6; ++r) {
    data(r, 0) = 4.0 - 250.0 * mu[std::size_t(r)];
    data(r, 1) = 2.5;
    data(r, 2) = 1.0 + 3.0 * mu[std::size_t(r)] + 0.01 * (r % 2);
  }
  const auto r = pearson_columns(data, mu);
  CHECK(std::abs(r[0] + 1.0) < 1e-12);
  CHECK(r[1] == 0.0);
  CHECK(r[2] > 0.9);
  CHECK(r[2] <= 1.0);

  Eigen::MatrixXd rescaled = data * 3.7;
  rescaled.array() += 11.0;
  std::vector<double> mu2 = mu;
  for (auto &m : mu2)
    m = 2.0 * m + 5.0;
  const auto r2 = pearson_columns(rescaled, mu2);
  for (int c = 0; c < 3; ++c)
    CHECK(r2[std::size_t(c)] == doctest::Approx(r[std::size_t(c)]).epsilon(1e-12));

  CHECK(pearson_columns(data, std::vector<double>(6, 0.01)) == std::vector<double>(3, 0.0));
  CHECK_THROWS_AS(pearson_columns(data, std::vector<double>(5, 0.01)), Error);
}

TEST_CASE("pearson null distribution") {
  CounterRng rng(77);
  const int n = 1000, bins = 200;
  Eigen::MatrixXd data(n, bins);
  std::vector<double> param(n);
  for (int r = 0; r < n; ++r) {
    param[std::size_t(r)] = rng.uniform();
    for (int c = 0; c < bins; ++c)
      data(r, c) = param[std::size_t(r)] * (c % 7) + rng.normal();
  }
  shuffle(param.begin(), param.end(), rng);
  const auto r = pearson_columns(data, param);
  double worst = 0.0;
  for (double v : r)
    worst = std::max(worst, std::abs(v));
  CHECK(worst < 0.15);
}

TEST_CASE("FD absorption correlation is strongest in the late tail") {
  fd::DomConfig cfg;
  const auto props = sample_parameter_grid(kDefaultMuARange, kDefaultMuSPrimeRange, 16, SamplingMode::LatinRandom, 9);
  LabeledDataset ds;
  for (const auto &p : props) {
    ds.signals.push_back(fd::run_fd(p, cfg));
    ds.labels.push_back(p);
  }
  const auto r = temporal_pearson(ds, Param::MuA);
  // Peak bin of the dataset-mean signal.
  std::vector<double> mean(200, 0.0);
  for (const auto &s : ds.signals)
    for (std::size_t i = 0; i < 200; ++i)
      mean[i] += s.values[i] / s.peak();
  const auto peak = std::size_t(std::max_element(mean.begin(), mean.end()) - mean.begin());
  double tail = 0.0;
  for (std::size_t i = 180; i < 200; ++i)
    tail += r[i] / 20.0;
  CHECK(tail < r[peak]);
  CHECK(tail < -0.5);
}
