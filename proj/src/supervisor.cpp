#include "psmpc/supervisor.hpp"

#include <cmath>
#include <string>

#include "psmpc/errors.hpp"

namespace psmpc {

std::string_view ToString(Mode m) {
  return m == Mode::kNominal ? "nominal" : "robust";
}

std::string_view ToString(SwitchReason r) {
  switch (r) {
    case SwitchReason::kStay:
      return "stay";
    case SwitchReason::kSwitchedBetterObjective:
      return "switched";
    case SwitchReason::kNoPermission:
      return "no_permission";
    case SwitchReason::kInitial:
      return "initial";
  }
  return "?";
}

void EnergyParams::Validate(int num_states) const {
  if (!(mass > 0.0) || !(gravity > 0.0) || !(dt > 0.0)) {
    throw ConfigError("energy parameters need mass, gravity and dt > 0");
  }
  for (int idx : {alpha_index, speed_index, theta_index}) {
    if (idx < 0 || idx >= num_states) {
      throw ConfigError("energy state index " + std::to_string(idx) + " out of range");
    }
  }
}

double WFunction(double sigma_w, const Eigen::VectorXd& x) {
  return sigma_w * x.squaredNorm();
}

double GammaFunction(double c_gamma, const Eigen::VectorXd& nu) {
  return c_gamma * nu.squaredNorm();
}

bool PermissionNominal(double V_now, const ActivationRecord& rec, double sigma_w) {
  if (!rec.ever_activated) return true;
  return V_now - rec.V <= -WFunction(sigma_w, rec.x);
}

bool PermissionRobust(double V_now, const ActivationRecord& rec, double sigma_w,
                      double c_gamma, const Eigen::VectorXd& nu) {
  if (!rec.ever_activated) return true;
  return V_now - rec.V <= -WFunction(sigma_w, rec.x) + GammaFunction(c_gamma, nu);
}

double AltitudeStep(const Eigen::VectorXd& x, double dz, const EnergyParams& ep) {
  const double gamma_fp = (x(ep.theta_index) - x(ep.alpha_index)) * ep.angle_scale;
  return dz + std::sin(gamma_fp) * (ep.v_trim + x(ep.speed_index)) * ep.dt;
}

std::vector<double> EnergyDeviation(const Eigen::MatrixXd& traj, double dz0,
                                    const EnergyParams& ep) {
  std::vector<double> out;
  out.reserve(traj.cols());
  double dz = dz0;
  for (int j = 0; j < traj.cols(); ++j) {
    const Eigen::VectorXd x = traj.col(j);
    const double v = x(ep.speed_index);
    const double ke = 0.5 * ep.mass * v * v;
    const double pe = ep.mass * ep.gravity * dz;
    out.push_back(std::hypot(ke, pe));
    dz = AltitudeStep(x, dz, ep);
  }
  return out;
}

double SuperObjective(const Eigen::MatrixXd& traj, double dz0, const EnergyParams& ep) {
  double sum = 0.0;
  for (double e : EnergyDeviation(traj, dz0, ep)) sum += e;
  return sum;
}

SwitchDecision Decide(const std::vector<OcpSolution>& solutions, const SwitchState& st,
                      Mode mode, const Eigen::VectorXd& nu_now, double dz0,
                      const EnergyParams& ep, const SupervisorParams& sp) {
  const int count = static_cast<int>(solutions.size());
  if (count == 0 || static_cast<int>(st.records.size()) != count) {
    throw InvalidModel("supervisor needs one solution and one record per controller");
  }
  SwitchDecision d;
  d.permissions.resize(count);
  d.objectives.resize(count);
  const double sigma = sp.sigma_w(mode);
  for (int i = 0; i < count; ++i) {
    d.objectives[i] = SuperObjective(solutions[i].X_star, dz0, ep);
    d.permissions[i] =
        mode == Mode::kNominal
            ? PermissionNominal(solutions[i].V, st.records[i], sigma)
            : PermissionRobust(solutions[i].V, st.records[i], sigma, sp.c_gamma, nu_now);
  }

  if (st.active < 0) {
    int best = 0;
    for (int i = 1; i < count; ++i) {
      if (d.objectives[i] < d.objectives[best]) best = i;
    }
    d.chosen = best;
    d.reason = SwitchReason::kInitial;
    return d;
  }

  d.chosen = st.active;
  d.reason = SwitchReason::kStay;
  bool blocked = false;
  for (int i = 0; i < count; ++i) {
    if (i == st.active || !(d.objectives[i] < d.objectives[d.chosen])) continue;
    if (!solutions[i].feasible) continue;
    if (d.permissions[i]) {
      d.chosen = i;
      d.reason = SwitchReason::kSwitchedBetterObjective;
    } else if (d.objectives[i] < d.objectives[st.active]) {
      blocked = true;
    }
  }
  if (d.chosen == st.active && blocked) d.reason = SwitchReason::kNoPermission;
  return d;
}

SwitchState UpdateRecords(SwitchState st, const SwitchDecision& decision,
                          double V_chosen, const Eigen::VectorXd& x_chosen, double t) {
  if (decision.chosen == st.active) return st;
  st.history.push_back(SwitchEvent{t, st.active, decision.chosen});
  ActivationRecord& rec = st.records.at(decision.chosen);
  rec.ever_activated = true;
  rec.t = t;
  rec.V = V_chosen;
  rec.x = x_chosen;
  st.active = decision.chosen;
  return st;
}

}  // namespace psmpc
