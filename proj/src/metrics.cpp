#include "ptocluster/metrics.hpp"

#include "ptocluster/errors.hpp"

#include <cmath>

namespace ptoc {

ModularityMatrix modularity_matrix(const Eigen::MatrixXd& adjacency) {
  const double two_e = adjacency.sum();
  if (two_e <= 0.0) throw NoEdges("modularity needs at least one edge");
  const Eigen::VectorXd k = adjacency.rowwise().sum();
  return {adjacency - k * k.transpose() / two_e, static_cast<int>(std::lround(two_e / 2.0)),
          adjacency, k};
}

ModularityMatrix modularity_matrix(const AoiGraph& graph) {
  return modularity_matrix(graph.adjacency());
}

double modularity(const Eigen::MatrixXd& Z, const ModularityMatrix& mm) {
  if (Z.rows() != mm.B.rows()) throw ShapeMismatch("modularity: Z must have one row per node");
  const double two_e = 2.0 * mm.edge_count;
  const double within = (Z.transpose() * mm.adjacency * Z).trace();
  return (within - (mm.degrees.transpose() * Z).squaredNorm() / two_e) / two_e;
}

Eigen::MatrixXd modularity_grad(const Eigen::MatrixXd& Z, const ModularityMatrix& mm) {
  if (Z.rows() != mm.B.rows()) throw ShapeMismatch("modularity: Z must have one row per node");
  return (mm.B * Z + mm.B.transpose() * Z) / (2.0 * mm.edge_count);
}

Eigen::MatrixXd one_hot(std::span<const int> labels, int clusters) {
  Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(labels.size()), clusters);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= clusters) throw ShapeMismatch("label out of range");
    Z(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  }
  return Z;
}

RegressionReport regression_report(std::span<const Eigen::VectorXd> y_true,
                                   std::span<const Eigen::VectorXd> y_pred) {
  if (y_true.size() != y_pred.size() || y_true.empty()) {
    throw ShapeMismatch("regression_report: need equally many, nonempty samples");
  }
  double count = 0.0, sq = 0.0, abs_err = 0.0, abs_true = 0.0, sum_true = 0.0;
  for (std::size_t s = 0; s < y_true.size(); ++s) {
    if (y_true[s].size() != y_pred[s].size()) throw ShapeMismatch("regression_report: length");
    const Eigen::VectorXd e = y_pred[s] - y_true[s];
    sq += e.squaredNorm();
    abs_err += e.cwiseAbs().sum();
    abs_true += y_true[s].cwiseAbs().sum();
    sum_true += y_true[s].sum();
    count += static_cast<double>(e.size());
  }
  if (count == 0.0) throw ShapeMismatch("regression_report: empty vectors");
  const double mean_true = sum_true / count;
  double var = 0.0;
  for (const auto& y : y_true) var += (y.array() - mean_true).square().sum();

  RegressionReport report;
  report.rmse = std::sqrt(sq / count);
  report.mae = abs_err / count;
  if (abs_true > 0.0) report.wmape = abs_err / abs_true;
  if (var > 0.0) report.r2 = 1.0 - sq / var;
  return report;
}

double RegressionReport::wmape_value() const {
  if (!wmape) throw DegenerateTarget("WMAPE undefined: targets sum to zero");
  return *wmape;
}

double RegressionReport::r2_value() const {
  if (!r2) throw DegenerateTarget("R2 undefined: targets have zero variance");
  return *r2;
}

}  // namespace ptoc
