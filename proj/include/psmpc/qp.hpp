#pragma once

#include <limits>
#include <optional>
#include <string_view>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace psmpc {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Convex QP in the form
///
///   minimize    1/2 z' Hc z + g' z
///   subject to  lb <= C z <= ub
///
/// Equalities are rows with lb == ub; free rows use +-infinity. Hc holds the
/// full symmetric matrix (both triangles).
struct QpProblem {
  SparseMatrix Hc;
  Eigen::VectorXd g;
  SparseMatrix C;
  Eigen::VectorXd lb;
  Eigen::VectorXd ub;

  int num_vars() const { return static_cast<int>(g.size()); }
  int num_rows() const { return static_cast<int>(lb.size()); }

  static QpProblem FromDense(const Eigen::MatrixXd& Hc,
                             const Eigen::VectorXd& g,
                             const Eigen::MatrixXd& C,
                             const Eigen::VectorXd& lb,
                             const Eigen::VectorXd& ub);

  /// Throws InvalidModel on inconsistent sizes, asymmetric Hc or lb > ub.
  void Validate() const;
};

enum class QpStatus { kSolved, kPrimalInfeasible, kDualInfeasible, kMaxIter };

std::string_view ToString(QpStatus s);

struct QpSettings {
  double eps_abs = 1e-8;
  double eps_rel = 1e-8;
  int max_iter = 20000;
  double rho = 0.1;
  double sigma = 1e-6;
  double alpha = 1.6;
  bool adaptive_rho = true;
  int scaling_iters = 10;
  bool polish = true;
  int check_interval = 10;
  double eps_prim_inf = 1e-4;
  double eps_dual_inf = 1e-4;
};

struct QpSolution {
  Eigen::VectorXd z;
  Eigen::VectorXd y;
  double obj = 0.0;
  QpStatus status = QpStatus::kMaxIter;
  int iters = 0;
  double primal_res = kInf;
  double dual_res = kInf;
  bool polished = false;
  /// For kPrimalInfeasible: y-direction with C' y ~ 0 and a negative
  /// support value on [lb, ub]. For kDualInfeasible: descent ray in z.
  Eigen::VectorXd certificate;

  bool solved() const { return status == QpStatus::kSolved; }
};

struct KktResiduals {
  double primal = 0.0;
  double dual = 0.0;
  double comp_slack = 0.0;
};

/// Recomputes the KKT residuals of (z, y) against the problem:
///   primal      |clip(C z, lb, ub) - C z|_inf
///   dual        |Hc z + g + C' y|_inf
///   comp_slack  max_i |y_i| * distance of (C z)_i to the bound y_i pushes on
KktResiduals ComputeKktResiduals(const QpProblem& p,
                                 const Eigen::VectorXd& z,
                                 const Eigen::VectorXd& y);

inline KktResiduals ComputeKktResiduals(const QpProblem& p,
                                        const QpSolution& s) {
  return ComputeKktResiduals(p, s.z, s.y);
}

/// Operator-splitting (ADMM) QP solver with Ruiz equilibration, adaptive
/// step size and an active-set polish on the converged iterate.
///
/// A solver owns its factorization workspace and is not thread-safe; use one
/// instance per thread. Problems are passed by const reference and never
/// modified.
class QpSolver {
 public:
  explicit QpSolver(QpSettings settings = {}) : settings_(settings) {}

  const QpSettings& settings() const { return settings_; }

  /// Solves `p`. `warm` (z, y in the unscaled problem) seeds the iteration
  /// when its dimensions match.
  QpSolution Solve(const QpProblem& p,
                   const QpSolution* warm = nullptr) const;

 private:
  QpSettings settings_;
};

inline QpSolution SolveQp(const QpProblem& p, const QpSettings& settings = {}) {
  return QpSolver(settings).Solve(p);
}

}  // namespace psmpc
