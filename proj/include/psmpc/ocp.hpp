#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "psmpc/lti_model.hpp"
#include "psmpc/polytope.hpp"
#include "psmpc/qp.hpp"
#include "psmpc/terminal_ingredients.hpp"

namespace psmpc {

/// One receding-horizon controller: prediction model, weights, terminal
/// ingredients and constraint sets.
struct MpcConfig {
  std::string id;
  std::string name;
  DiscreteModel model;
  Eigen::MatrixXd Q;
  Eigen::MatrixXd R;
  TerminalKit kit;
  int N = 0;
  Polytope X;
  Polytope U;
  /// Weight of the initial-state penalty in the soft-initial formulation.
  double lambda = 0.0;
  Translator translator;

  int num_states() const { return model.num_states(); }
  int num_inputs() const { return model.num_inputs(); }

  /// Throws InvalidModel on inconsistent data. `robust` additionally
  /// requires lambda > 0.
  void Validate(bool robust) const;
};

enum class OcpKind { kNominal, kComposed, kRobust };

/// A QP together with what is needed to read the solution back. Decision
/// vector layout:
///   [x_0 .. x_N | u_0 .. u_{N-1} | x^l_1 .. x^l_N for each restrictor l].
/// In nominal and composed problems x_0 is pinned to the measurement by
/// equality rows; in the robust problem it is the free variable xbar.
struct OcpProblem {
  /// Restrictor trajectory: coupled to the leader by x^l_1 = M x_1 and
  /// driven by the shared inputs.
  struct Restrictor {
    Eigen::MatrixXd Ad;
    Eigen::MatrixXd Bd;
    Eigen::MatrixXd M;
  };

  OcpKind kind = OcpKind::kNominal;
  QpProblem qp;
  /// Cost term not represented in the QP (robust: lambda |x|_P^2).
  double constant = 0.0;
  int n = 0;
  int m = 0;
  int N = 0;
  Eigen::VectorXd x_measured;
  Eigen::MatrixXd Ad;
  Eigen::MatrixXd Bd;
  std::vector<Restrictor> restrictors;

  int leader_vars() const { return n * (N + 1) + m * N; }
};

struct OcpStats {
  QpStatus status = QpStatus::kMaxIter;
  int iters = 0;
  double primal_res = 0.0;
  double dual_res = 0.0;
  double solve_ms = 0.0;
};

struct OcpSolution {
  Eigen::MatrixXd U_star;  // m x N
  Eigen::MatrixXd X_star;  // n x (N+1)
  double V = 0.0;
  Eigen::VectorXd xbar;
  bool feasible = false;
  OcpStats stats;
  /// Raw QP iterate, reused as a warm start.
  QpSolution qp;

  Eigen::VectorXd first_input() const { return U_star.col(0); }
};

/// Multiple-shooting QP for
///   min |x_N|_P^2 + sum_{s<N} |x_s|_Q^2 + |u_s|_R^2
///   s.t. x_0 = x0, dynamics, x_s in X (1 <= s < N), u_s in U, x_N in Xn.
/// The constraint on x_0 is left out: it is the measurement, not a decision.
OcpProblem BuildNominal(const MpcConfig& cfg, const Eigen::VectorXd& x0);

/// Leader problem plus one state trajectory per restrictor l, started at
/// x^l_1 = T_l T_i^-1 x_1 and driven by the leader's inputs, with X_l on
/// stages 1..N-1, Xn_l at stage N and U_l on inputs 1..N-1. Only the
/// leader's cost is minimized. `x0` is the leader's prediction state.
OcpProblem BuildComposed(const MpcConfig& leader,
                         const std::vector<const MpcConfig*>& restrictors,
                         const Eigen::VectorXd& x0);

/// Soft initial state: x_0 = xbar is free, xbar in X, and the cost gains
/// lambda |x_measured - xbar|_P^2.
OcpProblem BuildRobust(const MpcConfig& cfg, const Eigen::VectorXd& x_measured);

/// Solves and unpacks. A primal-infeasible composed problem throws
/// RecursiveFeasibilityViolation, a primal-infeasible nominal one OcpInfeasible. An
/// iteration-limited solve is returned with feasible set from its residual.
OcpSolution SolveOcp(const OcpProblem& p, const OcpSolution* warm = nullptr,
                     const QpSettings& settings = {});

/// Previous inputs shifted by one with the terminal controller appended:
///   [u_1 .. u_{N-1}, -K x_N].
Eigen::MatrixXd ShiftedCandidate(const OcpSolution& prev, const MpcConfig& cfg);

/// Decision vector obtained by simulating an input sequence through every
/// trajectory of `p`, starting from the problem's x_0 (or from `xbar` in the
/// robust case).
Eigen::VectorXd CandidateVector(const OcpProblem& p, const Eigen::MatrixXd& U,
                                const Eigen::VectorXd* xbar = nullptr);

/// Largest violation of lb <= C z <= ub (0 when feasible).
double MaxConstraintViolation(const QpProblem& qp, const Eigen::VectorXd& z);

/// Cost of a decision vector including the constant term.
double OcpCost(const OcpProblem& p, const Eigen::VectorXd& z);

}  // namespace psmpc
