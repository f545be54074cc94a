#pragma once

#include <Eigen/Dense>

namespace psmpc {

enum class LpStatus { kOptimal, kInfeasible, kUnbounded };

struct LpResult {
  LpStatus status = LpStatus::kInfeasible;
  Eigen::VectorXd y;
  double value = 0.0;
  int pivots = 0;
};

/// Dense two-phase tableau simplex with Bland's rule for
///   min c'y  s.t.  A y = b,  y >= 0.
/// Meant for problems with few equality rows and many columns, such as the
/// dual of a support-function LP.
LpResult SolveStandardLp(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                         const Eigen::VectorXd& c);

}  // namespace psmpc
