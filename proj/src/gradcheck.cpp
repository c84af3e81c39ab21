#include "ptocluster/gradcheck.hpp"

#include "ptocluster/aoi_data.hpp"
#include "ptocluster/cluster_layer.hpp"
#include "ptocluster/errors.hpp"
#include "ptocluster/lp.hpp"
#include "ptocluster/metrics.hpp"
#include "ptocluster/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <utility>

namespace ptoc {

namespace {

using Rng = std::mt19937_64;

// The 7-AOI example network, laid out on a rough 3 x 3 lattice.
AoiGraph example_graph() {
  std::vector<AoiNode> nodes;
  const double lon[] = {114.050, 114.058, 114.052, 114.066, 114.061, 114.074, 114.070};
  const double lat[] = {22.540, 22.546, 22.534, 22.551, 22.540, 22.556, 22.545};
  for (int i = 0; i < 7; ++i) nodes.push_back({i, lon[i], lat[i]});
  return AoiGraph::from_edges(
      std::move(nodes), {{0, 1}, {0, 2}, {1, 2}, {1, 3}, {2, 4}, {3, 4}, {3, 5}, {4, 6}, {5, 6}});
}

PredictorShape small_shape() {
  PredictorShape s;
  s.n = 7;
  s.window = 5;
  s.gcn_width = 4;
  s.filters = 8;
  s.fc1 = 32;
  s.fc2 = 16;
  return s;
}

Eigen::MatrixXd uniform_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double lo,
                               double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = d(rng);
  }
  return m;
}

void randomize_biases(PredictorParams& p, Rng& rng) {
  for (Eigen::VectorXd* b : {&p.value.gcn_b, &p.value.conv_b, &p.value.fc1_b, &p.value.fc2_b,
                             &p.value.fc3_b}) {
    *b = uniform_matrix(rng, b->size(), 1, -0.1, 0.1);
  }
}

struct ErrorAccumulator {
  double diff = 0.0;
  double scale = 0.0;
  int checked = 0;

  void add(double analytic, double numeric) {
    diff = std::max(diff, std::abs(analytic - numeric));
    scale = std::max({scale, std::abs(analytic), std::abs(numeric)});
    ++checked;
  }
  double error(double floor) const { return diff / std::max(scale, floor); }
};

GradcheckResult make_result(std::string suite, std::string item, const ErrorAccumulator& acc,
                            double floor, double threshold, int skipped = 0) {
  return {std::move(suite), std::move(item), acc.checked, skipped, acc.error(floor), threshold};
}

// Smallest max(lambda_i, slack_i): bounded away from zero means strict
// complementarity, where the solution map is differentiable.
double complementarity_margin(const LpSolution& sol) {
  return sol.lambda.cwiseMax(sol.slack).minCoeff();
}

// More active rows than the equality-reduced dimension: the vertex is
// primal degenerate and right-hand-side derivatives are one-sided.
bool primal_degenerate(const LpProblem& lp, const LpSolution& sol) {
  const auto active = (sol.slack.array() < 1e-6).count();
  return active + lp.num_eq() > lp.num_vars();
}

struct RandomAssignment {
  Eigen::MatrixXd points;
  Centers centers;
  Eigen::VectorXd y;
  ClusterConfig config;
};

RandomAssignment random_assignment(Rng& rng, int n, int k) {
  RandomAssignment r;
  r.points = uniform_matrix(rng, n, 2, 0.0, 5.0);
  r.centers.xy = uniform_matrix(rng, k, 2, 0.0, 5.0);
  r.y = uniform_matrix(rng, n, 1, 1.0, 10.0);
  r.config = ClusterConfig::for_weights(r.y, k, 0.7, 1.3);
  return r;
}

Eigen::MatrixXd reshape_z(const Eigen::VectorXd& z, Eigen::Index n, Eigen::Index k) {
  Eigen::MatrixXd Z(n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index p = 0; p < k; ++p) Z(i, p) = z(assignment_index(i, p, k));
  }
  return Z;
}

Eigen::VectorXd cost_for(const Eigen::MatrixXd& D, const Eigen::VectorXd& y) {
  const auto n = D.rows();
  const auto k = D.cols();
  Eigen::VectorXd c(n * k);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index p = 0; p < k; ++p) c(assignment_index(i, p, k)) = D(i, p) * y(i);
  }
  return c;
}

LpSolution solve_or_throw(const LpProblem& lp, double tol) {
  LpSolution sol = solve(lp, tol);
  if (!sol.optimal()) throw NumericalFailure("finite-difference probe LP did not converge");
  return sol;
}

}  // namespace

std::vector<GradcheckResult> gradcheck_predictor(std::uint64_t seed) {
  Rng rng(seed);
  const AoiGraph graph = example_graph();
  const Eigen::MatrixXd a_hat = normalized_adjacency(graph);
  PredictorParams params = init_params(small_shape(), seed);
  randomize_biases(params, rng);
  const Eigen::MatrixXd x = uniform_matrix(rng, 7, 5, 0.0, 1.0);
  const Eigen::VectorXd u = uniform_matrix(rng, 7, 1, -1.0, 1.0);

  SampleForward base = forward(params, a_hat, x);
  const std::vector<bool> pattern = base.tape.activity_pattern();
  params.zero_grad();
  backward(params, base.tape, u);

  constexpr double h = 1e-4;
  std::vector<GradcheckResult> out;
  auto values = params.value.tensors();
  const auto grads = std::as_const(params.grad).tensors();
  for (std::size_t t = 0; t < ParamTensors::kCount; ++t) {
    ErrorAccumulator acc;
    int skipped = 0;
    for (Eigen::Index j = 0; j < values[t].size(); ++j) {
      double& w = values[t].data[j];
      const double orig = w;
      w = orig + h;
      SampleForward plus = forward(params, a_hat, x);
      w = orig - h;
      SampleForward minus = forward(params, a_hat, x);
      w = orig;
      if (plus.tape.activity_pattern() != pattern || minus.tape.activity_pattern() != pattern) {
        ++skipped;
        continue;
      }
      acc.add(grads[t].data[j], (u.dot(plus.y) - u.dot(minus.y)) / (2.0 * h));
    }
    out.push_back(make_result("predictor", std::string(values[t].name), acc, 1e-12, 1e-3, skipped));
  }
  return out;
}

std::vector<GradcheckResult> gradcheck_lp(std::uint64_t seed) {
  Rng rng(seed);
  constexpr double tol = 1e-10;
  ErrorAccumulator cost_acc;
  ErrorAccumulator h_acc;
  ErrorAccumulator b_acc;
  double cost_err = 0.0;
  double h_err = 0.0;
  double b_err = 0.0;
  int skipped = 0;
  int rhs_skipped = 0;
  for (int trial = 0; trial < 40; ++trial) {
    RandomAssignment r = random_assignment(rng, 4, 2);
    r.config.lp_tol = tol;
    const Eigen::MatrixXd D = distance_matrix(r.points, r.centers);
    AssignStep step = assign_step(D, r.y, r.config);
    if (complementarity_margin(step.solution) < 1e-4) {
      ++skipped;
      continue;
    }
    const Eigen::MatrixXd g_Z = uniform_matrix(rng, 4, 2, -1.0, 1.0);
    const LayerContext ctx{step.problem, step.solution, D, r.y, r.centers};
    const Eigen::VectorXd g_y = backward_vjp(ctx, g_Z);
    const Eigen::VectorXd g_z = g_Z.transpose().reshaped();  // (i, p) with p fastest

    ErrorAccumulator cost;
    for (Eigen::Index i = 0; i < r.y.size(); ++i) {
      constexpr double dy = 1e-4;
      LpProblem lp = step.problem;
      Eigen::VectorXd yp = r.y;
      yp(i) += dy;
      lp.c = cost_for(D, yp);
      const double fp = g_z.dot(solve_or_throw(lp, tol).z);
      yp(i) -= 2 * dy;
      lp.c = cost_for(D, yp);
      const double fm = g_z.dot(solve_or_throw(lp, tol).z);
      cost.add(g_y(i), (fp - fm) / (2 * dy));
    }
    // Cost sensitivities vanish at a vertex, so the error is taken against
    // a unit scale.
    cost_err = std::max(cost_err, cost.error(1.0));
    cost_acc.checked += cost.checked;

    if (primal_degenerate(step.problem, step.solution)) {
      ++rhs_skipped;
      continue;
    }
    const KktAdjoint adj = kkt_transpose_solve(step.problem, step.solution, g_z);
    constexpr double dr = 1e-6;
    ErrorAccumulator hs;
    for (Eigen::Index m = 0; m < step.problem.h.size(); ++m) {
      LpProblem lp = step.problem;
      lp.h(m) += dr;
      const double fp = g_z.dot(solve_or_throw(lp, tol).z);
      lp.h(m) -= 2 * dr;
      const double fm = g_z.dot(solve_or_throw(lp, tol).z);
      hs.add(step.solution.lambda(m) * adj.v(m), (fp - fm) / (2 * dr));
    }
    h_err = std::max(h_err, hs.error(1e-6));
    h_acc.checked += hs.checked;

    ErrorAccumulator bs;
    for (Eigen::Index m = 0; m < step.problem.b.size(); ++m) {
      LpProblem lp = step.problem;
      lp.b(m) += dr;
      const double fp = g_z.dot(solve_or_throw(lp, tol).z);
      lp.b(m) -= 2 * dr;
      const double fm = g_z.dot(solve_or_throw(lp, tol).z);
      bs.add(adj.w(m), (fp - fm) / (2 * dr));
    }
    b_err = std::max(b_err, bs.error(1e-6));
    b_acc.checked += bs.checked;
  }
  return {{"lp", "vjp wrt y (cost)", cost_acc.checked, skipped, cost_err, 1e-2},
          {"lp", "sensitivity wrt h", h_acc.checked, skipped + rhs_skipped, h_err, 1e-2},
          {"lp", "sensitivity wrt b", b_acc.checked, skipped + rhs_skipped, b_err, 1e-2}};
}

std::vector<GradcheckResult> gradcheck_modularity(std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_int_distribution<int> size(3, 10);
  std::uniform_int_distribution<int> clusters(2, 4);
  std::bernoulli_distribution edge(0.4);
  double worst = 0.0;
  int checked = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = size(rng);
    const int k = clusters(rng);
    Eigen::MatrixXd adj = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        if (edge(rng)) adj(i, j) = adj(j, i) = 1.0;
      }
    }
    if (adj.sum() == 0.0) adj(0, 1) = adj(1, 0) = 1.0;
    const ModularityMatrix mm = modularity_matrix(adj);
    Eigen::MatrixXd Z = uniform_matrix(rng, n, k, 0.0, 1.0);
    Z = Z.array().colwise() / Z.rowwise().sum().array();
    const Eigen::MatrixXd g = modularity_grad(Z, mm);
    ErrorAccumulator acc;
    constexpr double h = 1e-5;
    for (int i = 0; i < n; ++i) {
      for (int p = 0; p < k; ++p) {
        Eigen::MatrixXd Zp = Z;
        Zp(i, p) += h;
        const double fp = modularity(Zp, mm);
        Zp(i, p) -= 2 * h;
        acc.add(g(i, p), (fp - modularity(Zp, mm)) / (2 * h));
      }
    }
    worst = std::max(worst, acc.error(1e-12));
    checked += acc.checked;
  }
  return {{"modularity", "dQ/dZ", checked, 0, worst, 1e-6}};
}

std::vector<GradcheckResult> gradcheck_end_to_end(std::uint64_t seed) {
  Rng rng(seed);
  const AoiGraph graph = example_graph();
  const Eigen::MatrixXd a_hat = normalized_adjacency(graph);
  const Eigen::MatrixXd points = project_to_km(graph);
  const ModularityMatrix mm = modularity_matrix(graph);
  PredictorParams params = init_params(small_shape(), seed);
  randomize_biases(params, rng);
  const Eigen::MatrixXd x = uniform_matrix(rng, 7, 5, 50.0, 150.0);
  params.input_scale = x.mean();
  // Keep predictions near the input scale so no AOI is clamped.
  params.value.fc3_b.array() += 1.0;

  LayerSettings settings;
  settings.clusters = 2;
  settings.lp_tol = 1e-10;
  SampleForward base = forward(params, a_hat, x);
  const LayerForward lf = layer_forward(points, base.y, settings, seed);
  const LayerContext& ctx = lf.result.context;
  params.zero_grad();
  backward(params, base.tape, layer_backward(lf, -modularity_grad(lf.result.soft.Z, mm)));

  auto loss_at = [&](const PredictorParams& p) {
    const Eigen::VectorXd y = forward(p, a_hat, x).y.cwiseMax(kMinLayerWeight);
    LpProblem lp = ctx.problem;
    lp.c = cost_for(ctx.distances, y);
    const LpSolution sol = solve_or_throw(lp, settings.lp_tol);
    return -modularity(reshape_z(sol.z, 7, 2), mm);
  };

  constexpr double h = 1e-4;
  constexpr int kProbesPerTensor = 24;
  std::vector<GradcheckResult> out;
  auto values = params.value.tensors();
  const auto grads = std::as_const(params.grad).tensors();
  for (std::size_t t = 0; t < ParamTensors::kCount; ++t) {
    std::uniform_int_distribution<Eigen::Index> pick(0, values[t].size() - 1);
    ErrorAccumulator acc;
    for (int probe = 0; probe < kProbesPerTensor; ++probe) {
      const Eigen::Index j = pick(rng);
      double& w = values[t].data[j];
      const double orig = w;
      w = orig + h;
      const double fp = loss_at(params);
      w = orig - h;
      const double fm = loss_at(params);
      w = orig;
      acc.add(grads[t].data[j], (fp - fm) / (2 * h));
    }
    out.push_back(make_result("end-to-end", std::string(values[t].name), acc, 1.0, 1e-2));
  }
  return out;
}

std::vector<GradcheckResult> gradcheck_all(std::uint64_t seed) {
  std::vector<GradcheckResult> all;
  for (auto&& part : {gradcheck_predictor(seed), gradcheck_lp(seed), gradcheck_modularity(seed),
                      gradcheck_end_to_end(seed)}) {
    all.insert(all.end(), part.begin(), part.end());
  }
  return all;
}

}  // namespace ptoc
