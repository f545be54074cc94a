#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "psmpc/lti_model.hpp"
#include "psmpc/supervisor.hpp"

namespace psmpc {

struct ControllerSpec {
  std::string id;
  std::string name;
  Eigen::MatrixXd Q;
  Eigen::MatrixXd R;
  double lambda = 10.0;
  /// Plant-to-prediction state map; empty means identity.
  Eigen::MatrixXd translator;
};

struct DisturbanceSpec {
  enum class Kind { kNone, kGaussianElevator };
  Kind kind = Kind::kNone;
  /// Mean and standard deviation in the units of the disturbed input.
  double mean = 0.0;
  double std = 0.0;
  /// Plant input channel the noise is added to.
  int input_index = 0;
};

/// Everything that defines a closed-loop run.
struct ScenarioConfig {
  std::string name;
  ContinuousLti plant;
  Eigen::VectorXd x0;
  Eigen::VectorXd state_lower;
  Eigen::VectorXd state_upper;
  Eigen::VectorXd input_lower;
  Eigen::VectorXd input_upper;
  std::vector<ControllerSpec> controllers;
  /// Controller ids the switched scheme may choose from.
  std::vector<std::string> pool;
  Mode mode = Mode::kNominal;
  /// "pSMPC" or "single:<id or name>".
  std::string selection = "pSMPC";
  double dt_sim = 0.01;
  double dt_mpc = 0.05;
  double t_final = 5.0;
  int horizon = 40;
  std::uint64_t seed = 1;
  DisturbanceSpec disturbance;
  EnergyParams energy;
  SupervisorParams supervisor;
  int moas_max_t = 500;

  /// Number of simulation steps; dt_mpc must be an integer multiple of
  /// dt_sim.
  int num_steps() const;
  /// Index into `controllers` by id or name; -1 when unknown.
  int FindController(const std::string& key) const;
  /// Controller indices selected for a run.
  std::vector<int> SelectedControllers() const;

  /// Throws ConfigError with a description of the first problem found.
  void Validate() const;
};

/// Parses the TOML scenario format. Throws ConfigError.
ScenarioConfig ParseScenario(const std::string& text, const std::string& origin = "");
ScenarioConfig LoadScenario(const std::string& path);

/// Writes a scenario back in the same format. Re-parsing the output gives a
/// semantically identical configuration.
std::string SerializeScenario(const ScenarioConfig& sc);

/// Applies a "pSMPC" / "single:<id>" selection and validates it.
void SetSelection(ScenarioConfig& sc, const std::string& selection);

Mode ParseMode(const std::string& s);

}  // namespace psmpc
