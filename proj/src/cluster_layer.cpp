#include "ptocluster/cluster_layer.hpp"

#include "ptocluster/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <string>

namespace ptoc {

void ClusterConfig::validate() const {
  if (clusters < 1) throw ValidationError("cluster count must be >= 1");
  if (!(lower >= 0.0) || !(lower <= upper)) {
    throw ValidationError("cluster bounds must satisfy 0 <= lower <= upper");
  }
  if (!(threshold_km > 0.0)) throw ValidationError("threshold_km must be positive");
  if (max_iter < 1) throw ValidationError("max_iter must be >= 1");
  if (!(lp_tol > 0.0)) throw ValidationError("lp_tol must be positive");
}

ClusterConfig ClusterConfig::for_weights(const Eigen::VectorXd& y, int clusters,
                                         double lower_mult, double upper_mult) {
  ClusterConfig cfg;
  cfg.clusters = clusters;
  const double mean_load = y.sum() / clusters;
  cfg.lower = lower_mult * mean_load;
  cfg.upper = std::max(upper_mult * mean_load, y.size() ? y.maxCoeff() : 0.0);
  return cfg;
}

bool HardAssignment::violates_bounds() const {
  return std::any_of(loads.begin(), loads.end(),
                     [](const ClusterLoad& l) { return l.excess > 0.0 || l.deficit > 0.0; });
}

void feasibility_check(const Eigen::VectorXd& y, const ClusterConfig& config) {
  config.validate();
  if (y.size() == 0) throw InfeasibleBounds("no AOI weights");
  if (!y.allFinite() || y.minCoeff() < 0.0) {
    throw InfeasibleBounds("AOI weights must be finite and nonnegative");
  }
  const double total = y.sum();
  const double k = config.clusters;
  std::ostringstream msg;
  if (total < k * config.lower) {
    msg << "total weight " << total << " is below K * lower = " << k * config.lower;
    throw InfeasibleBounds(msg.str());
  }
  if (total > k * config.upper) {
    msg << "total weight " << total << " exceeds K * upper = " << k * config.upper;
    throw InfeasibleBounds(msg.str());
  }
  if (y.maxCoeff() > config.upper) {
    msg << "an AOI weight of " << y.maxCoeff() << " exceeds the upper bound " << config.upper
        << " and cannot be split";
    throw InfeasibleBounds(msg.str());
  }
}

Centers init_centers(const Eigen::MatrixXd& points, const Eigen::VectorXd& y, int clusters,
                     std::uint64_t seed) {
  const auto n = points.rows();
  if (clusters < 1 || clusters > n) throw ValidationError("need 1 <= K <= n for seeding");
  if (y.size() != n) throw ShapeMismatch("init_centers: one weight per point");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<char> chosen(n, 0);
  std::vector<Eigen::Index> picks;

  auto draw = [&](const Eigen::VectorXd& mass) -> Eigen::Index {
    const double total = mass.sum();
    if (total > 0.0) {
      const double target = unit(rng) * total;
      double acc = 0.0;
      Eigen::Index last_positive = -1;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (mass(i) <= 0.0) continue;
        acc += mass(i);
        last_positive = i;
        if (target < acc) return i;
      }
      return last_positive;
    }
    // No mass left anywhere: first point not yet chosen.
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!chosen[i]) return i;
    }
    return 0;
  };

  const Eigen::VectorXd weights = y.cwiseMax(0.0);
  Eigen::VectorXd nearest_sq = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());
  for (int k = 0; k < clusters; ++k) {
    const Eigen::Index pick = k == 0 ? draw(weights) : draw(weights.cwiseProduct(nearest_sq));
    chosen[pick] = 1;
    picks.push_back(pick);
    for (Eigen::Index i = 0; i < n; ++i) {
      nearest_sq(i) = std::min(nearest_sq(i), (points.row(i) - points.row(pick)).squaredNorm());
    }
  }

  Centers centers{Eigen::MatrixXd(clusters, 2)};
  for (int k = 0; k < clusters; ++k) centers.xy.row(k) = points.row(picks[k]);
  return centers;
}

Eigen::MatrixXd distance_matrix(const Eigen::MatrixXd& points, const Centers& centers) {
  Eigen::MatrixXd D(points.rows(), centers.count());
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    for (int p = 0; p < centers.count(); ++p) {
      D(i, p) = (points.row(i) - centers.xy.row(p)).norm();
    }
  }
  return D;
}

LpProblem build_lp(const Eigen::MatrixXd& D, const Eigen::VectorXd& y,
                   const ClusterConfig& config) {
  feasibility_check(y, config);
  const auto n = D.rows();
  const auto k = static_cast<Eigen::Index>(config.clusters);
  if (D.cols() != k || y.size() != n) throw ShapeMismatch("build_lp: D must be n x K");
  const auto vars = n * k;

  LpProblem lp;
  lp.c.resize(vars);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index p = 0; p < k; ++p) lp.c(assignment_index(i, p, k)) = D(i, p) * y(i);
  }

  lp.G = Eigen::MatrixXd::Zero(2 * k + vars, vars);
  lp.h = Eigen::VectorXd::Zero(2 * k + vars);
  for (Eigen::Index p = 0; p < k; ++p) {
    for (Eigen::Index i = 0; i < n; ++i) {
      lp.G(p, assignment_index(i, p, k)) = y(i);
      lp.G(k + p, assignment_index(i, p, k)) = -y(i);
    }
    lp.h(p) = config.upper;
    lp.h(k + p) = -config.lower;
  }
  for (Eigen::Index v = 0; v < vars; ++v) lp.G(2 * k + v, v) = -1.0;

  lp.A = Eigen::MatrixXd::Zero(n, vars);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index p = 0; p < k; ++p) lp.A(i, assignment_index(i, p, k)) = 1.0;
  }
  lp.b = Eigen::VectorXd::Ones(n);
  return lp;
}

AssignStep assign_step(const Eigen::MatrixXd& D, const Eigen::VectorXd& y,
                       const ClusterConfig& config) {
  AssignStep step;
  step.problem = build_lp(D, y, config);
  step.solution = solve(step.problem, config.lp_tol);
  if (step.solution.status == LpStatus::Infeasible) {
    throw LpInfeasible("assignment LP reported infeasible");
  }
  if (!step.solution.optimal()) {
    throw NumericalFailure("assignment LP did not converge");
  }
  const auto n = D.rows();
  const auto k = D.cols();
  step.soft.Z.resize(n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index p = 0; p < k; ++p) {
      step.soft.Z(i, p) = step.solution.z(assignment_index(i, p, k));
    }
  }
  return step;
}

Centers update_centers(const SoftAssignment& soft, const Eigen::VectorXd& y,
                       const Eigen::MatrixXd& points) {
  const auto n = points.rows();
  const auto k = soft.Z.cols();
  if (soft.Z.rows() != n || y.size() != n) throw ShapeMismatch("update_centers: sizes");

  const Eigen::MatrixXd mass_per = soft.Z.array().colwise() * y.array();  // n x K
  const Eigen::VectorXd mass = mass_per.colwise().sum().transpose();
  Centers centers{Eigen::MatrixXd::Zero(k, 2)};
  std::vector<Eigen::Index> placed;
  std::vector<Eigen::Index> empty;
  for (Eigen::Index p = 0; p < k; ++p) {
    if (mass(p) >= kEmptyClusterMass) {
      centers.xy.row(p) = (mass_per.col(p).transpose() * points) / mass(p);
      placed.push_back(p);
    } else {
      empty.push_back(p);
    }
  }

  for (Eigen::Index p : empty) {
    Eigen::Index best = 0;
    double best_score = -1.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double nearest = std::numeric_limits<double>::infinity();
      for (Eigen::Index q : placed) {
        nearest = std::min(nearest, (points.row(i) - centers.xy.row(q)).norm());
      }
      if (placed.empty()) nearest = 1.0;
      const double score = std::max(y(i), 0.0) * nearest;
      if (score > best_score) {
        best_score = score;
        best = i;
      }
    }
    centers.xy.row(p) = points.row(best);
    placed.push_back(p);
  }
  return centers;
}

KMeansResult constrained_kmeans(const Eigen::MatrixXd& points, const Eigen::VectorXd& y,
                                const ClusterConfig& config) {
  feasibility_check(y, config);
  if (points.rows() < config.clusters) throw ValidationError("need at least K points");

  KMeansResult out;
  Centers centers = init_centers(points, y, config.clusters, config.seed);
  for (int pass = 1; pass <= config.max_iter; ++pass) {
    const Eigen::MatrixXd D = distance_matrix(points, centers);
    AssignStep step = assign_step(D, y, config);
    out.objectives.push_back(step.solution.objective);
    Centers next = update_centers(step.soft, y, points);
    const double movement = (next.xy - centers.xy).rowwise().norm().maxCoeff();
    out.movements.push_back(movement);
    centers = std::move(next);
    out.iterations = pass;
    if (movement <= config.threshold_km) break;
  }

  const Eigen::MatrixXd D = distance_matrix(points, centers);
  AssignStep final_step = assign_step(D, y, config);
  out.objectives.push_back(final_step.solution.objective);
  out.soft = std::move(final_step.soft);
  out.centers = centers;
  out.context = LayerContext{std::move(final_step.problem), std::move(final_step.solution), D, y,
                             std::move(centers)};
  return out;
}

HardAssignment harden(const SoftAssignment& soft, const Eigen::VectorXd& y,
                      const ClusterConfig& config) {
  const auto n = soft.Z.rows();
  const auto k = soft.Z.cols();
  HardAssignment hard;
  hard.labels.resize(n);
  hard.loads.resize(k);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index p = 1; p < k; ++p) {
      if (soft.Z(i, p) > soft.Z(i, best)) best = p;
    }
    hard.labels[i] = static_cast<int>(best);
    hard.loads[best].load += y(i);
  }
  for (auto& l : hard.loads) {
    l.excess = std::max(0.0, l.load - config.upper);
    l.deficit = std::max(0.0, config.lower - l.load);
  }
  return hard;
}

double fractional_row_share(const SoftAssignment& soft, double threshold) {
  if (soft.Z.rows() == 0) return 0.0;
  const Eigen::VectorXd row_max = soft.Z.rowwise().maxCoeff();
  return static_cast<double>((row_max.array() < threshold).count()) /
         static_cast<double>(soft.Z.rows());
}

Eigen::VectorXd backward_vjp(const LayerContext& ctx, const Eigen::MatrixXd& g_Z) {
  const auto n = ctx.distances.rows();
  const auto k = ctx.distances.cols();
  if (g_Z.rows() != n || g_Z.cols() != k) throw ShapeMismatch("backward_vjp: g_Z must be n x K");
  Eigen::VectorXd g_y = Eigen::VectorXd::Zero(n);
  // A single cluster pins Z to the all-ones column.
  if (k == 1) return g_y;

  Eigen::VectorXd g_flat(n * k);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index p = 0; p < k; ++p) g_flat(assignment_index(i, p, k)) = g_Z(i, p);
  }
  const KktAdjoint adj = kkt_transpose_solve(ctx.problem, ctx.solution, g_flat);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index p = 0; p < k; ++p) {
      g_y(i) -= ctx.distances(i, p) * adj.u(assignment_index(i, p, k));
    }
  }
  return g_y;
}

LayerForward layer_forward(const Eigen::MatrixXd& points, const Eigen::VectorXd& y_pred,
                           const LayerSettings& settings, std::uint64_t seed) {
  LayerForward out;
  out.weights = y_pred.cwiseMax(kMinLayerWeight);
  out.clamped.resize(y_pred.size());
  for (Eigen::Index i = 0; i < y_pred.size(); ++i) out.clamped[i] = !(y_pred(i) > kMinLayerWeight);
  out.config = ClusterConfig::for_weights(out.weights, settings.clusters, settings.lower_mult,
                                          settings.upper_mult);
  out.config.threshold_km = settings.threshold_km;
  out.config.max_iter = settings.max_iter;
  out.config.lp_tol = settings.lp_tol;
  out.config.seed = seed;
  out.result = constrained_kmeans(points, out.weights, out.config);
  return out;
}

Eigen::VectorXd layer_backward(const LayerForward& forward, const Eigen::MatrixXd& g_Z) {
  Eigen::VectorXd g_y = backward_vjp(forward.result.context, g_Z);
  for (Eigen::Index i = 0; i < g_y.size(); ++i) {
    if (forward.clamped[i]) g_y(i) = 0.0;
  }
  return g_y;
}

}  // namespace ptoc
