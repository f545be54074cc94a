#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "psmpc/lti_model.hpp"
#include "psmpc/polytope.hpp"

namespace psmpc {

/// Tolerance on every support-LP certificate in this module.
inline constexpr double kCertTol = 1e-7;

/// Terminal penalty, terminal controller u = -K x and terminal set of one
/// controller.
struct TerminalKit {
  Eigen::MatrixXd P;
  Eigen::MatrixXd K;
  Polytope Xn;
  Eigen::MatrixXd Acl;
  int t_star = 0;
  double dare_residual = 0.0;
};

/// Stabilizing solution of
///   P = A'PA - A'PB (R + B'PB)^-1 B'PA + Q
/// by Riccati recursion from P = Q. Stops once the sup-norm step is below
/// 1e-12 relative to max(1, |P|). Throws NotStabilizable on divergence or
/// after 1e5 iterations.
Eigen::MatrixXd SolveDare(const Eigen::MatrixXd& Ad, const Eigen::MatrixXd& Bd,
                          const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R);

/// Sup-norm of the Riccati equation residual at P.
double DareResidual(const Eigen::MatrixXd& P, const Eigen::MatrixXd& Ad,
                    const Eigen::MatrixXd& Bd, const Eigen::MatrixXd& Q,
                    const Eigen::MatrixXd& R);

/// K = (R + B'PB)^-1 B'PA.
Eigen::MatrixXd LqrGain(const Eigen::MatrixXd& P, const Eigen::MatrixXd& Ad,
                        const Eigen::MatrixXd& Bd, const Eigen::MatrixXd& R);

struct MoasResult {
  Polytope Xn;
  int t_star = 0;
};

/// Maximal output admissible set of x+ = Acl x for the output (x, -Kx) in
/// X x U. Builds O_t = {x : G Acl^j x <= g, j = 0..t} and stops at the first
/// t where every row of G Acl^(t+1) is implied by O_t. Throws
/// NotFinitelyDetermined when t reaches max_t.
MoasResult ComputeMoas(const Eigen::MatrixXd& Acl, const Polytope& X,
                       const Polytope& U, const Eigen::MatrixXd& K,
                       int max_t = 500);

/// DARE, LQR gain and MOAS for one controller.
TerminalKit SynthesizeKit(const DiscreteModel& model, const Eigen::MatrixXd& Q,
                          const Eigen::MatrixXd& R, const Polytope& X,
                          const Polytope& U, int max_t = 500);

/// Certificate for the ordered pair (i, l): terminal controller i acting on
/// terminal set l. Margins are max over rows of (support - bound); the check
/// passes when a margin is <= kCertTol.
struct PairCertificate {
  int i = 0;
  int l = 0;
  double invariance_margin = 0.0;
  double input_margin = 0.0;

  bool invariant() const { return invariance_margin <= kCertTol; }
  bool input_admissible() const { return input_margin <= kCertTol; }
  bool passed() const { return invariant() && input_admissible(); }
};

struct CertReport {
  std::vector<std::string> names;
  std::vector<PairCertificate> pairs;
  /// Common scale applied to all terminal sets (1 = untouched).
  double beta = 1.0;
  /// True when the per-controller sets were replaced by one set invariant
  /// under every terminal controller.
  bool common_set = false;

  bool passed() const;
  std::string ToText() const;
  std::string ToJson() const;
};

/// Cross-invariance check over every ordered pair of controllers: X^N_l must
/// be invariant under Acl_i and -K_i X^N_l must lie in U_l.
CertReport CheckCrossInvariance(const std::vector<TerminalKit>& kits,
                            const std::vector<Polytope>& U_sets);

/// Runs the check and repairs failures in place. Input-admissibility
/// failures are fixed by shrinking every terminal set with one factor beta
/// found by bisection. Invariance does not change under scaling, so those
/// failures replace all terminal sets by the maximal set that is invariant
/// under every Acl_i and admissible for every (X_l, U_l, K_i) combination.
CertReport EnforceCrossInvariance(std::vector<TerminalKit>& kits,
                              const std::vector<Polytope>& X_sets,
                              const std::vector<Polytope>& U_sets,
                              int max_t = 500);

/// Maximal set contained in every X_l with -K_i x in U_l for all i, l that
/// is invariant under x+ = Acl_i x for every i.
Polytope CommonInvariantSet(const std::vector<TerminalKit>& kits,
                            const std::vector<Polytope>& X_sets,
                            const std::vector<Polytope>& U_sets,
                            int max_t = 500);

}  // namespace psmpc
