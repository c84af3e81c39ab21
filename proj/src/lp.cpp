#include "ptocluster/lp.hpp"

#include "ptocluster/errors.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <vector>

namespace ptoc {

void LpProblem::validate() const {
  const auto n = num_vars();
  if (n == 0) throw ValidationError("LP has no variables");
  if (G.cols() != n || h.size() != G.rows()) {
    throw ValidationError("LP inequality block has inconsistent dimensions");
  }
  if (A.cols() != n || b.size() != A.rows()) {
    throw ValidationError("LP equality block has inconsistent dimensions");
  }
  if (!c.allFinite() || !G.allFinite() || !h.allFinite() || !A.allFinite() || !b.allFinite()) {
    throw ValidationError("LP data must be finite");
  }
  if (A.rows() > 0) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A.transpose());
    if (qr.rank() < A.rows()) throw ValidationError("LP equality rows are linearly dependent");
  }
}

const char* to_string(LpStatus status) {
  switch (status) {
    case LpStatus::Optimal: return "optimal";
    case LpStatus::Infeasible: return "infeasible";
    case LpStatus::NumericalFailure: return "numerical_failure";
  }
  return "unknown";
}

double KktResiduals::max() const {
  return std::max({stationarity, primal_eq, primal_ineq, complementarity});
}

namespace {

double inf_norm(const Eigen::VectorXd& v) { return v.size() ? v.lpNorm<Eigen::Infinity>() : 0.0; }

// Largest step in (0, 1] keeping v + step * dv >= 0.
double max_step(const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
  double step = 1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (dv(i) < 0.0) step = std::min(step, -v(i) / dv(i));
  }
  return step;
}

// Rows of G with a single nonzero (variable bounds) contribute a diagonal
// term to G' W G; only the remaining rows need a dense product.
struct RowStructure {
  std::vector<Eigen::Index> single_row;
  std::vector<Eigen::Index> single_col;
  std::vector<double> single_coef;
  std::vector<Eigen::Index> dense_row;
  Eigen::MatrixXd dense;

  explicit RowStructure(const Eigen::MatrixXd& G) {
    for (Eigen::Index r = 0; r < G.rows(); ++r) {
      Eigen::Index nnz = 0;
      Eigen::Index col = 0;
      for (Eigen::Index c = 0; c < G.cols(); ++c) {
        if (G(r, c) != 0.0) {
          ++nnz;
          col = c;
        }
      }
      if (nnz == 1) {
        single_row.push_back(r);
        single_col.push_back(col);
        single_coef.push_back(G(r, col));
      } else if (nnz > 1) {
        dense_row.push_back(r);
      }
    }
    dense.resize(static_cast<Eigen::Index>(dense_row.size()), G.cols());
    for (std::size_t k = 0; k < dense_row.size(); ++k) dense.row(k) = G.row(dense_row[k]);
  }
};

// Reduced Newton system [H A'; A -reg I] [dz; dnu] = [r1; r2] with
// H = G' W G + reg I. Cholesky on H plus a Schur complement on A when H is
// positive definite, dense LU on the whole block otherwise.
class NewtonSystem {
 public:
  NewtonSystem(const LpProblem& p, const RowStructure& rows) : p_(p), rows_(rows) {}

  bool factor(const Eigen::VectorXd& weights) {
    const auto n = p_.num_vars();
    const auto m_eq = p_.num_eq();
    Eigen::MatrixXd H(n, n);
    if (rows_.dense.rows() > 0) {
      Eigen::VectorXd wd(rows_.dense.rows());
      for (std::size_t k = 0; k < rows_.dense_row.size(); ++k) wd(k) = weights(rows_.dense_row[k]);
      const Eigen::MatrixXd scaled = wd.cwiseSqrt().asDiagonal() * rows_.dense;
      H.noalias() = scaled.transpose() * scaled;
    } else {
      H.setZero();
    }
    for (std::size_t k = 0; k < rows_.single_row.size(); ++k) {
      const double coef = rows_.single_coef[k];
      H(rows_.single_col[k], rows_.single_col[k]) += weights(rows_.single_row[k]) * coef * coef;
    }
    H.diagonal().array() += kReg;

    llt_.compute(H);
    use_lu_ = llt_.info() != Eigen::Success;
    if (!use_lu_ && m_eq > 0) {
      h_inv_at_ = llt_.solve(p_.A.transpose());
      Eigen::MatrixXd schur = p_.A * h_inv_at_;
      schur.diagonal().array() += kReg;
      schur_llt_.compute(schur);
      use_lu_ = schur_llt_.info() != Eigen::Success;
    }
    if (use_lu_) {
      Eigen::MatrixXd full = Eigen::MatrixXd::Zero(n + m_eq, n + m_eq);
      full.topLeftCorner(n, n) = H;
      full.topRightCorner(n, m_eq) = p_.A.transpose();
      full.bottomLeftCorner(m_eq, n) = p_.A;
      full.bottomRightCorner(m_eq, m_eq).diagonal().setConstant(-kReg);
      lu_.compute(full);
    }
    return true;
  }

  void solve(const Eigen::VectorXd& r1, const Eigen::VectorXd& r2, Eigen::VectorXd& dz,
             Eigen::VectorXd& dnu) const {
    const auto n = p_.num_vars();
    const auto m_eq = p_.num_eq();
    if (use_lu_) {
      Eigen::VectorXd rhs(n + m_eq);
      rhs << r1, r2;
      const Eigen::VectorXd x = lu_.solve(rhs);
      dz = x.head(n);
      dnu = x.tail(m_eq);
      return;
    }
    const Eigen::VectorXd h_inv_r1 = llt_.solve(r1);
    if (m_eq > 0) {
      dnu = schur_llt_.solve(p_.A * h_inv_r1 - r2);
      dz = h_inv_r1 - h_inv_at_ * dnu;
    } else {
      dnu.resize(0);
      dz = h_inv_r1;
    }
  }

 private:
  static constexpr double kReg = 1e-10;

  const LpProblem& p_;
  const RowStructure& rows_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::LLT<Eigen::MatrixXd> schur_llt_;
  Eigen::MatrixXd h_inv_at_;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
  bool use_lu_ = false;
};

struct Residuals {
  Eigen::VectorXd dual;   // c + G' lambda + A' nu
  Eigen::VectorXd eq;     // A z - b
  Eigen::VectorXd ineq;   // G z + s - h
};

}  // namespace

LpSolution solve(const LpProblem& p, double tol) {
  p.validate();
  const auto n = p.num_vars();
  const auto m = p.num_ineq();
  const auto m_eq = p.num_eq();
  const RowStructure rows(p.G);
  NewtonSystem newton(p, rows);

  const double c_norm = inf_norm(p.c);
  const double h_norm = inf_norm(p.h);
  const double b_norm = inf_norm(p.b);

  LpSolution sol;
  Eigen::VectorXd z(n), s(m), lambda(m), nu(m_eq);

  // Starting point: least-squares primal and minimum-norm dual, then
  // shifted into the positive orthant.
  newton.factor(Eigen::VectorXd::Ones(m));
  {
    Eigen::VectorXd dnu;
    newton.solve(p.G.transpose() * p.h, p.b, z, dnu);
    s = p.h - p.G * z;
    Eigen::VectorXd x;
    newton.solve(-p.c, Eigen::VectorXd::Zero(m_eq), x, nu);
    lambda = p.G * x;
  }
  if (m > 0) {
    const double shift_s = -s.minCoeff();
    if (shift_s >= 0.0) s.array() += 1.0 + shift_s;
    const double shift_l = -lambda.minCoeff();
    if (shift_l >= 0.0) lambda.array() += 1.0 + shift_l;
  }

  auto residuals = [&]() {
    Residuals r;
    r.dual = p.c + p.G.transpose() * lambda + p.A.transpose() * nu;
    r.eq = p.A * z - p.b;
    r.ineq = p.G * z + s - p.h;
    return r;
  };
  auto primal_infeasibility = [&](const Residuals& r) {
    return std::max(inf_norm(r.eq) / (1.0 + b_norm), inf_norm(r.ineq) / (1.0 + h_norm));
  };

  constexpr double kStepFraction = 0.99;
  constexpr int kStallWindow = 30;
  std::vector<double> pinf_history;
  sol.status = LpStatus::NumericalFailure;

  int it = 0;
  for (; it <= kMaxIpmIterations; ++it) {
    const Residuals r = residuals();
    const double gap = m > 0 ? s.dot(lambda) : 0.0;
    const double objective = p.c.dot(z);
    const double pinf = primal_infeasibility(r);
    const double dinf = inf_norm(r.dual) / (1.0 + c_norm);
    if (!std::isfinite(gap) || !std::isfinite(pinf) || !std::isfinite(dinf)) break;

    if (gap <= tol * std::max(1.0, std::abs(objective)) && pinf <= tol && dinf <= tol) {
      sol.status = LpStatus::Optimal;
      break;
    }
    pinf_history.push_back(pinf);
    if (pinf > 1e-6) {
      // Complementarity has collapsed but the primal residual has not, or
      // the residual has stopped shrinking: no feasible point is reachable.
      const bool collapsed = m > 0 && gap / m < 1e-3 * tol && it > 10;
      const bool stalled = it >= kStallWindow &&
                           pinf > 0.9 * pinf_history[pinf_history.size() - kStallWindow];
      if (collapsed || stalled) {
        sol.status = LpStatus::Infeasible;
        break;
      }
    }
    if (it == kMaxIpmIterations) {
      sol.status = pinf > 1e-6 ? LpStatus::Infeasible : LpStatus::NumericalFailure;
      break;
    }

    const double mu = m > 0 ? gap / m : 0.0;
    const Eigen::VectorXd weights = lambda.cwiseQuotient(s);
    newton.factor(weights);

    // Direction for complementarity target rc, i.e. Lambda ds + S dlambda = -rc.
    auto direction = [&](const Eigen::VectorXd& rc, Eigen::VectorXd& dz, Eigen::VectorXd& ds,
                         Eigen::VectorXd& dl, Eigen::VectorXd& dnu) {
      const Eigen::VectorXd t = (lambda.cwiseProduct(r.ineq) - rc).cwiseQuotient(s);
      const Eigen::VectorXd r1 = -r.dual - p.G.transpose() * t;
      newton.solve(r1, -r.eq, dz, dnu);
      ds = -r.ineq - p.G * dz;
      dl = t + weights.cwiseProduct(p.G * dz);
    };

    Eigen::VectorXd dz, ds, dl, dnu;
    direction(s.cwiseProduct(lambda), dz, ds, dl, dnu);
    double step_p = max_step(s, ds);
    double step_d = max_step(lambda, dl);

    if (m > 0) {
      const double mu_aff = (s + step_p * ds).dot(lambda + step_d * dl) / m;
      const double sigma = std::pow(std::clamp(mu_aff / mu, 0.0, 1.0), 3);
      const Eigen::VectorXd rc =
          (s.cwiseProduct(lambda) + ds.cwiseProduct(dl)).array() - sigma * mu;
      direction(rc, dz, ds, dl, dnu);
      step_p = std::min(1.0, kStepFraction * max_step(s, ds));
      step_d = std::min(1.0, kStepFraction * max_step(lambda, dl));
    }

    z += step_p * dz;
    s += step_p * ds;
    lambda += step_d * dl;
    nu += step_d * dnu;
  }

  sol.iterations = it;
  sol.z = z;
  sol.lambda = lambda;
  sol.nu = nu;
  sol.slack = p.h - p.G * z;
  sol.objective = p.c.dot(z);
  sol.gap = m > 0 ? s.dot(lambda) : 0.0;
  return sol;
}

KktResiduals kkt_residuals(const LpProblem& p, const LpSolution& sol) {
  KktResiduals r;
  r.stationarity = inf_norm(p.c + p.A.transpose() * sol.nu + p.G.transpose() * sol.lambda);
  r.primal_eq = inf_norm(p.A * sol.z - p.b);
  const Eigen::VectorXd viol = p.G * sol.z - p.h;
  r.primal_ineq = viol.size() ? std::max(0.0, viol.maxCoeff()) : 0.0;
  r.complementarity = inf_norm(sol.lambda.cwiseProduct(viol));
  return r;
}

KktAdjoint kkt_transpose_solve(const LpProblem& p, const LpSolution& sol,
                               const Eigen::VectorXd& g_z, double damping) {
  const auto n = p.num_vars();
  const auto m = p.num_ineq();
  const auto m_eq = p.num_eq();
  if (g_z.size() != n) throw ShapeMismatch("kkt_transpose_solve: g_z must have length N");
  const auto dim = n + m + m_eq;

  KktAdjoint out;
  out.u = Eigen::VectorXd::Zero(n);
  out.v = Eigen::VectorXd::Zero(m);
  out.w = Eigen::VectorXd::Zero(m_eq);
  if (g_z.isZero(0.0)) return out;

  // K' = [[0, G' Diag(lambda), A'], [G, Diag(Gz - h), 0], [A, 0, 0]]
  Eigen::MatrixXd kt = Eigen::MatrixXd::Zero(dim, dim);
  kt.block(0, n, n, m) = p.G.transpose() * sol.lambda.asDiagonal();
  kt.block(0, n + m, n, m_eq) = p.A.transpose();
  kt.block(n, 0, m, n) = p.G;
  kt.block(n, n, m, m).diagonal() = p.G * sol.z - p.h;
  kt.block(n + m, 0, m_eq, n) = p.A;

  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dim);
  rhs.head(n) = g_z;
  const double limit = kKktResidualLimit * std::max(1.0, inf_norm(g_z));

  auto attempt = [&](double delta) -> bool {
    Eigen::MatrixXd sys = kt;
    sys.diagonal().array() += delta;
    const Eigen::VectorXd x = Eigen::PartialPivLU<Eigen::MatrixXd>(sys).solve(rhs);
    if (!x.allFinite()) return false;
    const double residual = inf_norm(kt * x - rhs);
    if (!(residual <= limit)) return false;
    out.u = x.head(n);
    out.v = x.segment(n, m);
    out.w = x.tail(m_eq);
    out.damping = delta;
    out.residual = residual;
    return true;
  };

  if (attempt(0.0)) return out;
  for (double delta = damping; delta <= kMaxKktDamping * (1.0 + 1e-12); delta *= 10.0) {
    if (attempt(delta)) return out;
  }
  throw NumericalFailure("transposed KKT system could not be solved within residual 1e-5");
}

std::string dump_problem(const LpProblem& p) {
  std::ostringstream out;
  out << std::setprecision(17);
  auto matrix = [&out](const char* name, const Eigen::MatrixXd& mtx) {
    out << name << " " << mtx.rows() << " " << mtx.cols() << "\n";
    for (Eigen::Index r = 0; r < mtx.rows(); ++r) {
      for (Eigen::Index c = 0; c < mtx.cols(); ++c) out << (c ? " " : "") << mtx(r, c);
      out << "\n";
    }
  };
  matrix("c", p.c);
  matrix("G", p.G);
  matrix("h", p.h);
  matrix("A", p.A);
  matrix("b", p.b);
  return out.str();
}

}  // namespace ptoc
