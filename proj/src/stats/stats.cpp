#include <tpsf/stats/stats.hpp>

#include <algorithm>
#include <cmath>

#include <Eigen/SVD>

#include <tpsf/core/error.hpp>

namespace tpsf::stats {

std::size_t PcaResult::n_components_for(double q) const {
  for (std::size_t k = 0; k < cumulative.size(); ++k)
    if (cumulative[k] >= q - 1e-12)
      return k + 1;
  return cumulative.size();
}

Eigen::MatrixXd log_signal_matrix(const LabeledDataset &ds, double floor_ratio) {
  ds.validate();
  const auto rows = static_cast<Eigen::Index>(ds.size());
  const auto cols = static_cast<Eigen::Index>(ds.grid().n_bins);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto logged = sig::log_floored(ds.signals[static_cast<std::size_t>(r)].values, floor_ratio);
    for (Eigen::Index c = 0; c < cols; ++c)
      m(r, c) = logged[static_cast<std::size_t>(c)];
  }
  return m;
}

PcaResult pca_explained_variance(const Eigen::MatrixXd &data) {
  require(data.rows() >= 2, "PCA needs at least two samples");
  const Eigen::MatrixXd centered = data.rowwise() - data.colwise().mean();
  const Eigen::BDCSVD<Eigen::MatrixXd> svd(centered);
  const Eigen::VectorXd sv = svd.singularValues();

  PcaResult out;
  const auto k = static_cast<std::size_t>(sv.size());
  out.explained_variance_ratio.assign(k, 0.0);
  const double total = sv.squaredNorm();
  // Identical rows can leave rounding residue from the mean; treat spread at
  // the level of machine precision as no variance at all.
  const double scale = std::max(data.cwiseAbs().maxCoeff(), 1e-300);
  if (!(total > 0.0) || sv[0] <= 1e-13 * scale * std::sqrt(static_cast<double>(data.size()))) {
    out.explained_variance_ratio[0] = 1.0;
  } else {
    for (std::size_t i = 0; i < k; ++i)
      out.explained_variance_ratio[i] = sv[static_cast<Eigen::Index>(i)] * sv[static_cast<Eigen::Index>(i)] / total;
  }
  out.cumulative.resize(k);
  double run = 0.0;
  for (std::size_t i = 0; i < k; ++i)
    out.cumulative[i] = run += out.explained_variance_ratio[i];
  return out;
}

PcaResult pca_explained_variance(const LabeledDataset &ds, double floor_ratio) {
  return pca_explained_variance(log_signal_matrix(ds, floor_ratio));
}

std::vector<double> pearson_columns(const Eigen::MatrixXd &data, const std::vector<double> &param) {
  require(static_cast<std::size_t>(data.rows()) == param.size(), "parameter length does not match rows");
  require(param.size() >= 3, "correlation needs at least three samples");
  const auto n = static_cast<double>(param.size());
  double pm = 0.0;
  for (double p : param)
    pm += p;
  pm /= n;
  Eigen::VectorXd pc(data.rows());
  for (Eigen::Index r = 0; r < data.rows(); ++r)
    pc[r] = param[static_cast<std::size_t>(r)] - pm;
  const bool constant_param = std::all_of(param.begin(), param.end(), [&](double p) { return p == param[0]; });
  const double pss = constant_param ? 0.0 : pc.squaredNorm();

  std::vector<double> out(static_cast<std::size_t>(data.cols()), 0.0);
  for (Eigen::Index c = 0; c < data.cols(); ++c) {
    if (data.col(c).maxCoeff() == data.col(c).minCoeff() || pss <= 0.0)
      continue;
    const Eigen::VectorXd col = data.col(c).array() - data.col(c).mean();
    const double css = col.squaredNorm();
    out[static_cast<std::size_t>(c)] = std::clamp(col.dot(pc) / std::sqrt(css * pss), -1.0, 1.0);
  }
  return out;
}

std::vector<double> temporal_pearson(const LabeledDataset &ds, Param which, double floor_ratio) {
  std::vector<double> param;
  param.reserve(ds.size());
  for (const auto &l : ds.labels)
    param.push_back(value_of(l, which));
  return pearson_columns(log_signal_matrix(ds, floor_ratio), param);
}

} // namespace tpsf::stats
