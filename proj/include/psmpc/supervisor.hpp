#pragma once

#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "psmpc/ocp.hpp"

namespace psmpc {

enum class Mode { kNominal, kRobust };

std::string_view ToString(Mode m);

/// Aircraft data for the total-energy objective. The state vector is read
/// through the three indices; angles are multiplied by angle_scale to get
/// radians.
struct EnergyParams {
  double mass = 1000.0;
  double gravity = 9.81;
  /// Step of the altitude integration (the prediction step for predicted
  /// trajectories, the simulation step for realized ones).
  double dt = 0.05;
  double v_trim = 0.0;
  int alpha_index = 0;
  int speed_index = 2;
  int theta_index = 3;
  double angle_scale = 1.0;

  void Validate(int num_states) const;
};

struct SupervisorParams {
  double sigma_w_nominal = 1e-1;
  double sigma_w_robust = 1e-3;
  double c_gamma = 1e4;

  double sigma_w(Mode m) const {
    return m == Mode::kNominal ? sigma_w_nominal : sigma_w_robust;
  }
};

/// Value and state stored at the most recent activation of a controller.
struct ActivationRecord {
  bool ever_activated = false;
  double t = 0.0;
  double V = 0.0;
  Eigen::VectorXd x;
};

struct SwitchEvent {
  double t = 0.0;
  int from = -1;  // -1 for the first activation
  int to = -1;
};

struct SwitchState {
  int active = -1;
  std::vector<ActivationRecord> records;
  std::vector<SwitchEvent> history;

  explicit SwitchState(int controllers = 0) : records(controllers) {}
};

enum class SwitchReason { kStay, kSwitchedBetterObjective, kNoPermission, kInitial };

std::string_view ToString(SwitchReason r);

struct SwitchDecision {
  int chosen = -1;
  std::vector<bool> permissions;
  std::vector<double> objectives;
  SwitchReason reason = SwitchReason::kStay;
};

/// W(x) = sigma |x|^2.
double WFunction(double sigma_w, const Eigen::VectorXd& x);

/// gamma(|nu|) = c |nu|^2.
double GammaFunction(double c_gamma, const Eigen::VectorXd& nu);

/// True for a controller that was never active; otherwise
///   V_now - rec.V <= -W(rec.x).
bool PermissionNominal(double V_now, const ActivationRecord& rec, double sigma_w);

/// As PermissionNominal with gamma(|nu|) added to the right-hand side.
bool PermissionRobust(double V_now, const ActivationRecord& rec, double sigma_w,
                      double c_gamma, const Eigen::VectorXd& nu);

/// Per-sample energy deviation sqrt(KE^2 + PE^2) along a state trajectory
/// (columns), starting from altitude deviation dz0.
std::vector<double> EnergyDeviation(const Eigen::MatrixXd& traj, double dz0,
                                    const EnergyParams& ep);

/// Sum of EnergyDeviation over all samples.
double SuperObjective(const Eigen::MatrixXd& traj, double dz0, const EnergyParams& ep);

/// Altitude deviation after one step of length ep.dt from state x.
double AltitudeStep(const Eigen::VectorXd& x, double dz, const EnergyParams& ep);

/// Ranks every controller by the objective of its predicted trajectory and
/// picks the best among the incumbent and the permitted ones. Ties keep the
/// incumbent. Before the first activation every controller is a candidate.
SwitchDecision Decide(const std::vector<OcpSolution>& solutions, const SwitchState& st,
                      Mode mode, const Eigen::VectorXd& nu_now, double dz0,
                      const EnergyParams& ep, const SupervisorParams& sp);

/// Applies a decision: on a change of controller, logs the switch and stores
/// (t, V, x) as the new controller's activation record.
SwitchState UpdateRecords(SwitchState st, const SwitchDecision& decision,
                          double V_chosen, const Eigen::VectorXd& x_chosen, double t);

}  // namespace psmpc
