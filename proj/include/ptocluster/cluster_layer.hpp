#pragma once

#include "ptocluster/lp.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace ptoc {

// K clusters with per-cluster order load in [lower, upper].
struct ClusterConfig {
  int clusters = 5;
  double upper = 0.0;  // a_u
  double lower = 0.0;  // b_l
  double threshold_km = 2.0;
  int max_iter = 5;
  std::uint64_t seed = 0;
  double lp_tol = kDefaultLpTol;

  void validate() const;

  // lower = lower_mult * sum(y) / K, upper = upper_mult * sum(y) / K, with
  // upper raised to max(y) when a single AOI would exceed it.
  static ClusterConfig for_weights(const Eigen::VectorXd& y, int clusters, double lower_mult,
                                   double upper_mult);
};

struct Centers {
  Eigen::MatrixXd xy;  // K x 2, km

  int count() const { return static_cast<int>(xy.rows()); }
};

struct SoftAssignment {
  Eigen::MatrixXd Z;  // n x K, rows on the simplex
};

struct ClusterLoad {
  double load = 0.0;
  double excess = 0.0;   // load above the upper bound
  double deficit = 0.0;  // load below the lower bound
};

struct HardAssignment {
  std::vector<int> labels;
  std::vector<ClusterLoad> loads;

  bool violates_bounds() const;
};

// Forward state kept for the backward pass: the LP solved at the final
// centers and everything that parameterized it.
struct LayerContext {
  LpProblem problem;
  LpSolution solution;
  Eigen::MatrixXd distances;  // n x K
  Eigen::VectorXd weights;
  Centers centers;
};

// Throws InfeasibleBounds unless K*lower <= sum(y) <= K*upper and
// max(y) <= upper.
void feasibility_check(const Eigen::VectorXd& y, const ClusterConfig& config);

// Weighted k-means++ seeding on planar points (n x 2).
Centers init_centers(const Eigen::MatrixXd& points, const Eigen::VectorXd& y, int clusters,
                     std::uint64_t seed);

Eigen::MatrixXd distance_matrix(const Eigen::MatrixXd& points, const Centers& centers);

// Variable (i, p) sits at index i * K + p.
inline Eigen::Index assignment_index(Eigen::Index i, Eigen::Index p, Eigen::Index clusters) {
  return i * clusters + p;
}

// Relaxed assignment LP: cost D[i,p] * y_i; capacity rows sum_i y_i z_ip <= upper
// and -sum_i y_i z_ip <= -lower per cluster; -z <= 0; each AOI's row sums to one.
LpProblem build_lp(const Eigen::MatrixXd& distances, const Eigen::VectorXd& y,
                   const ClusterConfig& config);

struct AssignStep {
  SoftAssignment soft;
  LpProblem problem;
  LpSolution solution;
};

// Throws NumericalFailure / LpInfeasible when the solver does not reach an
// optimum.
AssignStep assign_step(const Eigen::MatrixXd& distances, const Eigen::VectorXd& y,
                       const ClusterConfig& config);

inline constexpr double kEmptyClusterMass = 1e-9;

// Weighted centroids. A cluster with mass below 1e-9 is re-seeded at the
// point with the largest weighted distance to its nearest center.
Centers update_centers(const SoftAssignment& soft, const Eigen::VectorXd& y,
                       const Eigen::MatrixXd& points);

struct KMeansResult {
  SoftAssignment soft;
  Centers centers;
  LayerContext context;
  int iterations = 0;               // outer loop passes before the final solve
  std::vector<double> objectives;   // LP objective of every solve, final included
  std::vector<double> movements;    // max center displacement per pass
};

// Alternate assignment LP and centroid update until the largest center
// movement is <= threshold_km or max_iter passes ran, then solve once more at
// the final centers.
KMeansResult constrained_kmeans(const Eigen::MatrixXd& points, const Eigen::VectorXd& y,
                                const ClusterConfig& config);

// Row argmax with ties to the lowest index, plus per-cluster load report.
HardAssignment harden(const SoftAssignment& soft, const Eigen::VectorXd& y,
                      const ClusterConfig& config);

// Share of rows whose largest entry is below `threshold`.
double fractional_row_share(const SoftAssignment& soft, double threshold = 0.99);

// Vector-Jacobian product g_Z -> g_y through the final LP, with distances,
// G, h, A, and the right-hand side held fixed.
Eigen::VectorXd backward_vjp(const LayerContext& context, const Eigen::MatrixXd& g_Z);

inline constexpr double kMinLayerWeight = 1e-6;

// Forward pass of the optimization layer as used in training: clamps
// predictions to at least 1e-6, derives bounds from the clamped weights,
// and runs constrained_kmeans.
struct LayerForward {
  KMeansResult result;
  ClusterConfig config;
  Eigen::VectorXd weights;
  std::vector<bool> clamped;
};

struct LayerSettings {
  int clusters = 5;
  double lower_mult = 0.7;
  double upper_mult = 1.3;
  double threshold_km = 2.0;
  int max_iter = 5;
  double lp_tol = kDefaultLpTol;
};

LayerForward layer_forward(const Eigen::MatrixXd& points, const Eigen::VectorXd& y_pred,
                           const LayerSettings& settings, std::uint64_t seed);

// backward_vjp with the gradient zeroed on clamped coordinates.
Eigen::VectorXd layer_backward(const LayerForward& forward, const Eigen::MatrixXd& g_Z);

}  // namespace ptoc
