#pragma once

#include <Eigen/Dense>

#include <string>

namespace ptoc {

// minimize c'z  subject to  G z <= h,  A z = b.
struct LpProblem {
  Eigen::VectorXd c;
  Eigen::MatrixXd G;
  Eigen::VectorXd h;
  Eigen::MatrixXd A;
  Eigen::VectorXd b;

  Eigen::Index num_vars() const { return c.size(); }
  Eigen::Index num_ineq() const { return G.rows(); }
  Eigen::Index num_eq() const { return A.rows(); }

  // Dimensions, finiteness, and full row rank of A. Throws ValidationError.
  void validate() const;
};

enum class LpStatus { Optimal, Infeasible, NumericalFailure };

const char* to_string(LpStatus status);

// Duals follow the Lagrangian c'z + nu'(Az - b) + lambda'(Gz - h), so at an
// optimum c + A'nu + G'lambda = 0 and lambda >= 0.
struct LpSolution {
  Eigen::VectorXd z;
  Eigen::VectorXd lambda;
  Eigen::VectorXd nu;
  Eigen::VectorXd slack;  // h - G z, strictly positive at IPM iterates
  double objective = 0.0;
  double gap = 0.0;       // slack' lambda
  LpStatus status = LpStatus::NumericalFailure;
  int iterations = 0;

  bool optimal() const { return status == LpStatus::Optimal; }
};

inline constexpr double kDefaultLpTol = 1e-8;
inline constexpr int kMaxIpmIterations = 200;

// Primal-dual path-following interior point method with Mehrotra's
// predictor-corrector. Stops when slack'lambda <= tol * max(1, |c'z|) and
// the primal and dual residuals are below tol relative to the data norms.
LpSolution solve(const LpProblem& problem, double tol = kDefaultLpTol);

struct KktResiduals {
  double stationarity = 0.0;     // |c + A'nu + G'lambda|_inf
  double primal_eq = 0.0;        // |A z - b|_inf
  double primal_ineq = 0.0;      // max(0, max(G z - h))
  double complementarity = 0.0;  // |Diag(lambda)(G z - h)|_inf

  double max() const;
};

KktResiduals kkt_residuals(const LpProblem& problem, const LpSolution& solution);

struct KktAdjoint {
  Eigen::VectorXd u;  // primal block, length N
  Eigen::VectorXd v;  // inequality block, length M
  Eigen::VectorXd w;  // equality block, length P
  double damping = 0.0;
  double residual = 0.0;
};

inline constexpr double kDefaultKktDamping = 1e-8;
inline constexpr double kMaxKktDamping = 1e-4;
inline constexpr double kKktResidualLimit = 1e-5;

// Solves K' [u; v; w] = [g_z; 0; 0] for the differentiated KKT matrix
//   K = [[0, G', A'], [Diag(lambda) G, Diag(Gz - h), 0], [A, 0, 0]].
// Tries an undamped solve first, then ridge damping starting at `damping`
// and growing x10 up to 1e-4. Throws NumericalFailure if the residual stays
// above 1e-5 * max(1, |g_z|_inf).
//
// Sensitivities of g_z'z follow from the adjoint: d/dc = -u,
// d/dh = lambda .* v, d/db = w.
KktAdjoint kkt_transpose_solve(const LpProblem& problem, const LpSolution& solution,
                               const Eigen::VectorXd& g_z,
                               double damping = kDefaultKktDamping);

// Portable text dump of (c, G, h, A, b) for cross-checking with other solvers.
std::string dump_problem(const LpProblem& problem);

}  // namespace ptoc
