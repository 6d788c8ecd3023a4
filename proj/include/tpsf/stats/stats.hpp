#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Core>

#include <tpsf/core/dataset.hpp>
#include <tpsf/sigproc/sigproc.hpp>

namespace tpsf::stats {

struct PcaResult {
  std::vector<double> explained_variance_ratio; ///< descending, sums to 1
  std::vector<double> cumulative;

  /// Smallest k with cumulative[k - 1] >= q.
  std::size_t n_components_for(double q) const;
};

/// One row per sample: log10 of the signal floored at floor_ratio * peak.
Eigen::MatrixXd log_signal_matrix(const LabeledDataset &ds, double floor_ratio = sig::kDefaultFloorRatio);

/// PCA of the rows of `data` (columns are variables). Column means are removed
/// and the spectrum comes from the singular values of the centered matrix. A
/// dataset without variance puts everything in the first component.
PcaResult pca_explained_variance(const Eigen::MatrixXd &data);
PcaResult pca_explained_variance(const LabeledDataset &ds, double floor_ratio = sig::kDefaultFloorRatio);

/// Pearson r between each column of `data` and `param`; zero-variance columns give 0.
std::vector<double> pearson_columns(const Eigen::MatrixXd &data, const std::vector<double> &param);
std::vector<double> temporal_pearson(const LabeledDataset &ds, Param which,
                                     double floor_ratio = sig::kDefaultFloorRatio);

} // namespace tpsf::stats
