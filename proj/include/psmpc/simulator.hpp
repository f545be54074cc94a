#pragma once

#include <functional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "psmpc/ocp.hpp"
#include "psmpc/scenario.hpp"
#include "psmpc/supervisor.hpp"
#include "psmpc/terminal_ingredients.hpp"

namespace psmpc {

/// Controllers of one run with their synthesized terminal ingredients.
struct ControllerSet {
  std::vector<MpcConfig> configs;
  /// Indices into ScenarioConfig::controllers.
  std::vector<int> scenario_index;
  /// Cross-invariance of the unmodified terminal sets.
  CertReport initial_cert;
  /// Report after any repair; this is what the run uses.
  CertReport cert;
};

/// Builds prediction models, DARE/LQR/MOAS kits and enforces terminal-set
/// cross-invariance for the given controllers.
ControllerSet SynthesizeControllers(const ScenarioConfig& sc, const std::vector<int>& which);

/// Same for the scenario's current selection.
ControllerSet SynthesizeControllers(const ScenarioConfig& sc);

struct SimRow {
  double t = 0.0;
  Eigen::VectorXd xi;
  Eigen::VectorXd mu;
  /// Disturbance seen by the supervisor at this step: the injected sample
  /// plus the prediction mismatch of the previous step (robust mode).
  Eigen::VectorXd nu;
  int sigma = -1;
  std::vector<double> V;
  std::vector<bool> permission;
  std::vector<double> J;
  double dz = 0.0;
  double dE = 0.0;
  std::vector<int> qp_iters;
  std::vector<double> solve_ms;
};

struct SimLog {
  std::vector<std::string> ids;
  std::vector<std::string> names;
  std::vector<std::string> state_labels;
  std::vector<std::string> input_labels;
  Mode mode = Mode::kNominal;
  std::string selection;
  std::uint64_t seed = 0;
  std::vector<SimRow> rows;
  std::vector<SwitchEvent> switches;
  CertReport cert;
  /// Sum of dE accumulated while running.
  double J_streaming = 0.0;
  int max_iter_warnings = 0;
  double wall_time_s = 0.0;
};

/// What the simulator exposes after each supervisor call.
struct StepTrace {
  int step = 0;
  double t = 0.0;
  const Eigen::VectorXd* xi = nullptr;
  const std::vector<OcpProblem>* problems = nullptr;
  const std::vector<OcpSolution>* solutions = nullptr;
  const SwitchDecision* decision = nullptr;
  int applied = -1;
};

struct SimHooks {
  /// Replaces the supervisor's choice; receives the decision and the run's
  /// own RNG stream reserved for this purpose.
  std::function<int(const SwitchDecision&, std::mt19937_64&)> choice_override;
  std::function<void(const StepTrace&)> on_step;
  /// Worker threads for the per-step solves; 0 reads PSMPC_THREADS and
  /// falls back to the hardware concurrency.
  int threads = 0;
  QpSettings qp;
};

/// Closed-loop sampled-data run. Each step measures the plant, solves every
/// controller's problem (composed in nominal mode, soft-initial in robust
/// mode), lets the supervisor choose, holds the chosen first input over one
/// simulation step and integrates the plant. Throws RecursiveFeasibilityViolation when a
/// composed problem is infeasible.
SimLog RunClosedLoop(const ScenarioConfig& sc, const ControllerSet& set,
                     const SimHooks& hooks = {});
SimLog RunClosedLoop(const ScenarioConfig& sc, const SimHooks& hooks = {});

struct Metrics {
  double J = 0.0;
  double max_state_violation = 0.0;
  double max_input_violation = 0.0;
  int switches = 0;
  double mean_solve_ms = 0.0;
};

/// Objective over the realized trajectory and bookkeeping numbers.
Metrics EvaluateMetrics(const SimLog& log, const ScenarioConfig& sc);

/// CSV with header; every number printed with round-trip precision.
std::string LogToCsv(const SimLog& log);
/// Run metadata: ids, seed, switches, certificate and metrics.
std::string LogMetadataJson(const SimLog& log, const Metrics& m,
                            const std::string& config_hash);

/// Worker count from PSMPC_THREADS (>= 1), else hardware concurrency.
int ThreadsFromEnvironment();

}  // namespace psmpc
