#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace psmpc {

/// Continuous-time linear plant  xi' = A xi + B mu + nu.
struct ContinuousLti {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  std::vector<std::string> state_labels;
  std::vector<std::string> input_labels;

  int num_states() const { return static_cast<int>(A.rows()); }
  int num_inputs() const { return static_cast<int>(B.cols()); }

  /// Throws InvalidModel if the matrices are inconsistent or non-finite.
  void Validate() const;
};

/// Discrete prediction model  x(k+1) = Ad x(k) + Bd u(k)  sampled at dt.
struct DiscreteModel {
  Eigen::MatrixXd Ad;
  Eigen::MatrixXd Bd;
  double dt = 0.0;

  int num_states() const { return static_cast<int>(Ad.rows()); }
  int num_inputs() const { return static_cast<int>(Bd.cols()); }

  Eigen::VectorXd Step(const Eigen::VectorXd& x,
                       const Eigen::VectorXd& u) const {
    return Ad * x + Bd * u;
  }
};

/// Maps a sampled plant state onto the prediction state of one controller.
struct Translator {
  Eigen::MatrixXd M;

  static Translator Identity(int n) {
    return Translator{Eigen::MatrixXd::Identity(n, n)};
  }
};

/// Disturbance signal evaluated at time offsets tau in [0, dt].
using DisturbanceFn = std::function<Eigen::VectorXd(double tau)>;

/// Exact zero-order-hold discretization. Ad = exp(A dt) and
/// Bd = int_0^dt exp(A s) ds B, both read off the exponential of the
/// augmented matrix [[A, B], [0, 0]] * dt.
DiscreteModel ZohDiscretize(const ContinuousLti& sys, double dt);

/// Integrates the plant over one hold interval with fixed-step RK4. The input
/// is held constant; `nu` may be empty (no disturbance).
Eigen::VectorXd IntegratePlant(const ContinuousLti& sys,
                               const Eigen::VectorXd& xi0,
                               const Eigen::VectorXd& mu,
                               const DisturbanceFn& nu, double dt,
                               int substeps = 4);

Eigen::VectorXd Translate(const Translator& tr, const Eigen::VectorXd& xi);

/// True when the vertically stacked translator matrices have full column
/// rank `plant_states`. This gives a linear lower bound
///   sum_i |M_i xi| >= c |xi|,  c > 0,
/// for the prediction-state norms in terms of the plant state norm.
bool StackedTranslatorsFullRank(std::span<const Translator> translators,
                                int plant_states);

/// Spectral radius of a square matrix.
double SpectralRadius(const Eigen::MatrixXd& A);

}  // namespace psmpc
