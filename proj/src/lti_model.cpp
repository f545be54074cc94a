#include "psmpc/lti_model.hpp"

#include <cmath>

#include <unsupported/Eigen/MatrixFunctions>

#include "psmpc/errors.hpp"

namespace psmpc {

void ContinuousLti::Validate() const {
  if (A.rows() != A.cols()) {
    throw InvalidModel("plant A must be square");
  }
  if (B.rows() != A.rows()) {
    throw InvalidModel("plant B must have as many rows as A");
  }
  if (!A.allFinite() || !B.allFinite()) {
    throw InvalidModel("plant matrices contain non-finite entries");
  }
  if (!state_labels.empty() &&
      static_cast<int>(state_labels.size()) != num_states()) {
    throw InvalidModel("state label count does not match A");
  }
  if (!input_labels.empty() &&
      static_cast<int>(input_labels.size()) != num_inputs()) {
    throw InvalidModel("input label count does not match B");
  }
}

DiscreteModel ZohDiscretize(const ContinuousLti& sys, double dt) {
  sys.Validate();
  if (!(dt > 0.0) || !std::isfinite(dt)) {
    throw InvalidModel("discretization step must be positive");
  }
  const int n = sys.num_states();
  const int m = sys.num_inputs();
  Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(n + m, n + m);
  aug.topLeftCorner(n, n) = sys.A * dt;
  aug.topRightCorner(n, m) = sys.B * dt;
  const Eigen::MatrixXd e = aug.exp();
  DiscreteModel out;
  out.Ad = e.topLeftCorner(n, n);
  out.Bd = e.topRightCorner(n, m);
  out.dt = dt;
  return out;
}

Eigen::VectorXd IntegratePlant(const ContinuousLti& sys,
                               const Eigen::VectorXd& xi0,
                               const Eigen::VectorXd& mu,
                               const DisturbanceFn& nu, double dt,
                               int substeps) {
  if (substeps < 1) {
    throw InvalidModel("substeps must be >= 1");
  }
  const Eigen::VectorXd forced = sys.B * mu;
  auto rhs = [&](double tau, const Eigen::VectorXd& x) -> Eigen::VectorXd {
    Eigen::VectorXd dx = sys.A * x + forced;
    if (nu) dx += nu(tau);
    return dx;
  };
  const double h = dt / substeps;
  Eigen::VectorXd x = xi0;
  for (int s = 0; s < substeps; ++s) {
    const double tau = s * h;
    const Eigen::VectorXd k1 = rhs(tau, x);
    const Eigen::VectorXd k2 = rhs(tau + 0.5 * h, x + 0.5 * h * k1);
    const Eigen::VectorXd k3 = rhs(tau + 0.5 * h, x + 0.5 * h * k2);
    const Eigen::VectorXd k4 = rhs(tau + h, x + h * k3);
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return x;
}

Eigen::VectorXd Translate(const Translator& tr, const Eigen::VectorXd& xi) {
  if (tr.M.cols() != xi.size()) {
    throw InvalidModel("translator column count does not match plant state");
  }
  return tr.M * xi;
}

bool StackedTranslatorsFullRank(std::span<const Translator> translators,
                                int plant_states) {
  int rows = 0;
  for (const auto& t : translators) {
    if (t.M.cols() != plant_states) {
      throw InvalidModel("translator column count does not match plant state");
    }
    rows += static_cast<int>(t.M.rows());
  }
  if (rows < plant_states) return false;
  Eigen::MatrixXd stacked(rows, plant_states);
  int r = 0;
  for (const auto& t : translators) {
    stacked.middleRows(r, t.M.rows()) = t.M;
    r += static_cast<int>(t.M.rows());
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(stacked);
  return lu.rank() == plant_states;
}

double SpectralRadius(const Eigen::MatrixXd& A) {
  if (A.size() == 0) return 0.0;
  return A.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace psmpc
