#pragma once

#include "ptocluster/aoi_data.hpp"

#include <Eigen/Dense>

#include <optional>
#include <span>

namespace ptoc {

// B = A - k k' / (2E). E counts undirected edges (the modularity "m").
struct ModularityMatrix {
  Eigen::MatrixXd B;
  int edge_count = 0;
  Eigen::MatrixXd adjacency;
  Eigen::VectorXd degrees;
};

ModularityMatrix modularity_matrix(const AoiGraph& graph);
ModularityMatrix modularity_matrix(const Eigen::MatrixXd& adjacency);

// Q = Tr(Z' B Z) / (2E) for soft (row-stochastic) or one-hot Z, evaluated as
// (Tr(Z' A Z) - |k' Z|^2 / 2E) / 2E so integer-valued terms stay exact.
double modularity(const Eigen::MatrixXd& Z, const ModularityMatrix& mm);

// dQ/dZ = (B Z + B' Z) / (2E). The training loss is -Q.
Eigen::MatrixXd modularity_grad(const Eigen::MatrixXd& Z, const ModularityMatrix& mm);

// n x K one-hot matrix from labels.
Eigen::MatrixXd one_hot(std::span<const int> labels, int clusters);

// WMAPE (sum|e| / sum|y_true|) and R2 are empty when undefined for the
// targets; the checked accessors throw DegenerateTarget in that case.
struct RegressionReport {
  double rmse = 0.0;
  double mae = 0.0;
  std::optional<double> wmape;
  std::optional<double> r2;

  double wmape_value() const;
  double r2_value() const;
};

// Pools every entry of every sample.
RegressionReport regression_report(std::span<const Eigen::VectorXd> y_true,
                                   std::span<const Eigen::VectorXd> y_pred);

}  // namespace ptoc
