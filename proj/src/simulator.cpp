#include "psmpc/simulator.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <future>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "psmpc/errors.hpp"

namespace psmpc {
namespace {

std::string Num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Prediction-space sets and model for a translator T (square, invertible):
//   x = T xi,  A_T = T A T^-1,  B_T = T B,  {x : H T^-1 x <= h}.
struct Coordinates {
  Eigen::MatrixXd T;
  Eigen::MatrixXd T_inv;
};

Coordinates MakeCoordinates(const ControllerSpec& spec, int n) {
  if (spec.translator.size() == 0) {
    return {Eigen::MatrixXd::Identity(n, n), Eigen::MatrixXd::Identity(n, n)};
  }
  if (spec.translator.rows() != n || spec.translator.cols() != n) {
    throw ConfigError("controller '" + spec.id + "': only square translators are supported");
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(spec.translator);
  if (!lu.isInvertible()) {
    throw ConfigError("controller '" + spec.id + "': translator must be invertible");
  }
  return {spec.translator, lu.inverse()};
}

std::vector<std::string> Labels(const std::vector<std::string>& given, int count,
                                const std::string& stem) {
  if (static_cast<int>(given.size()) == count) return given;
  std::vector<std::string> out;
  for (int i = 0; i < count; ++i) out.push_back(stem + std::to_string(i));
  return out;
}

}  // namespace

int ThreadsFromEnvironment() {
  if (const char* env = std::getenv("PSMPC_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) return static_cast<int>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

ControllerSet SynthesizeControllers(const ScenarioConfig& sc, const std::vector<int>& which) {
  sc.Validate();
  const int n = sc.plant.num_states();
  const DiscreteModel plant_model = ZohDiscretize(sc.plant, sc.dt_mpc);
  const Polytope X_plant = Polytope::FromBox(sc.state_lower, sc.state_upper);
  const Polytope U = Polytope::FromBox(sc.input_lower, sc.input_upper);

  ControllerSet set;
  std::vector<TerminalKit> kits;
  std::vector<Polytope> X_sets;
  std::vector<Polytope> U_sets;
  for (int idx : which) {
    const ControllerSpec& spec = sc.controllers.at(idx);
    const Coordinates c = MakeCoordinates(spec, n);
    MpcConfig cfg;
    cfg.id = spec.id;
    cfg.name = spec.name;
    cfg.model.Ad = c.T * plant_model.Ad * c.T_inv;
    cfg.model.Bd = c.T * plant_model.Bd;
    cfg.model.dt = sc.dt_mpc;
    cfg.Q = spec.Q;
    cfg.R = spec.R;
    cfg.N = sc.horizon;
    cfg.X = Polytope(X_plant.H() * c.T_inv, X_plant.h());
    cfg.U = U;
    cfg.lambda = spec.lambda;
    cfg.translator = Translator{c.T};
    try {
      cfg.kit = SynthesizeKit(cfg.model, cfg.Q, cfg.R, cfg.X, cfg.U, sc.moas_max_t);
    } catch (const InvalidModel& e) {
      throw ConfigError("controller '" + spec.id + "': " + e.what());
    }
    kits.push_back(cfg.kit);
    X_sets.push_back(cfg.X);
    U_sets.push_back(cfg.U);
    set.configs.push_back(std::move(cfg));
    set.scenario_index.push_back(idx);
  }
  set.initial_cert = CheckCrossInvariance(kits, U_sets);
  set.cert = EnforceCrossInvariance(kits, X_sets, U_sets, sc.moas_max_t);
  for (std::size_t i = 0; i < kits.size(); ++i) {
    set.configs[i].kit.Xn = kits[i].Xn;
    set.initial_cert.names.push_back(set.configs[i].id);
    set.cert.names.push_back(set.configs[i].id);
  }
  for (const MpcConfig& cfg : set.configs) cfg.Validate(sc.mode == Mode::kRobust);
  return set;
}

ControllerSet SynthesizeControllers(const ScenarioConfig& sc) {
  return SynthesizeControllers(sc, sc.SelectedControllers());
}

SimLog RunClosedLoop(const ScenarioConfig& sc, const SimHooks& hooks) {
  return RunClosedLoop(sc, SynthesizeControllers(sc), hooks);
}

SimLog RunClosedLoop(const ScenarioConfig& sc, const ControllerSet& set,
                     const SimHooks& hooks) {
  sc.Validate();
  const auto wall_start = std::chrono::steady_clock::now();
  const int n = sc.plant.num_states();
  const int m = sc.plant.num_inputs();
  const int count = static_cast<int>(set.configs.size());
  if (count == 0) throw ConfigError("no controllers selected");
  const int steps = sc.num_steps();
  const bool robust = sc.mode == Mode::kRobust;
  // The disturbance only acts in the robust framework.
  const bool disturbed =
      robust && sc.disturbance.kind == DisturbanceSpec::Kind::kGaussianElevator;

  // Held inputs and a held disturbance make the exact discretization the
  // exact plant flow over one step.
  const DiscreteModel plant_step = ZohDiscretize(sc.plant, sc.dt_sim);
  std::vector<DiscreteModel> pred_step;
  for (const MpcConfig& cfg : set.configs) {
    const Eigen::MatrixXd& T = cfg.translator.M;
    const Eigen::MatrixXd T_inv = T.inverse();
    pred_step.push_back(DiscreteModel{T * plant_step.Ad * T_inv, T * plant_step.Bd, sc.dt_sim});
  }
  EnergyParams ep_pred = sc.energy;
  ep_pred.dt = sc.dt_mpc;
  EnergyParams ep_sim = sc.energy;
  ep_sim.dt = sc.dt_sim;

  std::mt19937_64 noise_rng(sc.seed);
  std::mt19937_64 choice_rng(sc.seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> noise(sc.disturbance.mean, sc.disturbance.std);
  const int threads =
      std::min(count, hooks.threads > 0 ? hooks.threads : ThreadsFromEnvironment());

  SimLog log;
  for (const MpcConfig& cfg : set.configs) {
    log.ids.push_back(cfg.id);
    log.names.push_back(cfg.name);
  }
  log.state_labels = Labels(sc.plant.state_labels, n, "x");
  log.input_labels = Labels(sc.plant.input_labels, m, "u");
  log.mode = sc.mode;
  log.selection = sc.selection;
  log.seed = sc.seed;
  log.cert = set.cert;

  SwitchState st(count);
  std::vector<OcpSolution> warm(count);
  std::vector<bool> has_warm(count, false);
  Eigen::VectorXd xi = sc.x0;
  double dz = 0.0;
  Eigen::VectorXd mismatch_rate = Eigen::VectorXd::Zero(n);

  for (int k = 0; k <= steps; ++k) {
    const double t = k * sc.dt_sim;
    const double w = disturbed ? noise(noise_rng) : 0.0;
    Eigen::VectorXd nu = Eigen::VectorXd::Zero(n);
    if (disturbed) nu += sc.plant.B.col(sc.disturbance.input_index) * w;
    if (robust) nu += mismatch_rate;

    std::vector<Eigen::VectorXd> x_pred(count);
    std::vector<OcpProblem> problems(count);
    for (int i = 0; i < count; ++i) {
      x_pred[i] = Translate(set.configs[i].translator, xi);
      if (robust) {
        problems[i] = BuildRobust(set.configs[i], x_pred[i]);
      } else {
        std::vector<const MpcConfig*> restrictors;
        for (int l = 0; l < count; ++l) {
          if (l != i) restrictors.push_back(&set.configs[l]);
        }
        problems[i] = BuildComposed(set.configs[i], restrictors, x_pred[i]);
      }
    }

    std::vector<OcpSolution> solutions(count);
    auto solve = [&](int i) {
      solutions[i] = SolveOcp(problems[i], has_warm[i] ? &warm[i] : nullptr, hooks.qp);
    };
    if (threads <= 1) {
      for (int i = 0; i < count; ++i) solve(i);
    } else {
      std::vector<std::future<void>> jobs;
      for (int w0 = 0; w0 < threads; ++w0) {
        jobs.push_back(std::async(std::launch::async, [&, w0] {
          for (int i = w0; i < count; i += threads) solve(i);
        }));
      }
      for (auto& j : jobs) j.get();
    }
    for (int i = 0; i < count; ++i) {
      if (solutions[i].stats.status == QpStatus::kMaxIter) ++log.max_iter_warnings;
      warm[i] = solutions[i];
      has_warm[i] = true;
    }

    const SwitchDecision decision =
        Decide(solutions, st, sc.mode, nu, dz, ep_pred, sc.supervisor);
    int applied = decision.chosen;
    if (hooks.choice_override) {
      applied = hooks.choice_override(decision, choice_rng);
      if (applied < 0 || applied >= count) throw InvalidModel("choice override out of range");
    }
    SwitchDecision effective = decision;
    effective.chosen = applied;
    st = UpdateRecords(std::move(st), effective, solutions[applied].V, x_pred[applied], t);

    // Translators act on states only, so the input is applied as is.
    const Eigen::VectorXd mu = solutions[applied].first_input();
    const Eigen::VectorXd& u = mu;

    SimRow row;
    row.t = t;
    row.xi = xi;
    row.mu = mu;
    row.nu = nu;
    row.sigma = applied;
    row.dz = dz;
    const std::vector<double> dE = EnergyDeviation(xi, dz, ep_sim);
    row.dE = dE.front();
    log.J_streaming += row.dE;
    for (int i = 0; i < count; ++i) {
      row.V.push_back(solutions[i].V);
      row.permission.push_back(decision.permissions[i]);
      row.J.push_back(decision.objectives[i]);
      row.qp_iters.push_back(solutions[i].stats.iters);
      row.solve_ms.push_back(solutions[i].stats.solve_ms);
    }
    log.rows.push_back(std::move(row));

    if (hooks.on_step) {
      StepTrace trace;
      trace.step = k;
      trace.t = t;
      trace.xi = &xi;
      trace.problems = &problems;
      trace.solutions = &solutions;
      trace.decision = &decision;
      trace.applied = applied;
      hooks.on_step(trace);
    }
    if (k == steps) break;

    Eigen::VectorXd mu_plant = mu;
    if (disturbed) mu_plant(sc.disturbance.input_index) += w;
    const Eigen::VectorXd xi_next = plant_step.Step(xi, mu_plant);
    dz = AltitudeStep(xi, dz, ep_sim);
    if (robust) {
      // Realized next state against the first predicted one, propagated
      // from the optimized initial state with the held input.
      const Eigen::VectorXd predicted =
          pred_step[applied].Step(solutions[applied].xbar, u);
      const Eigen::VectorXd realized = Translate(set.configs[applied].translator, xi_next);
      mismatch_rate = (realized - predicted) / sc.dt_sim;
    }
    xi = xi_next;
  }
  log.switches = st.history;
  log.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
  return log;
}

Metrics EvaluateMetrics(const SimLog& log, const ScenarioConfig& sc) {
  Metrics out;
  EnergyParams ep = sc.energy;
  ep.dt = sc.dt_sim;
  if (!log.rows.empty()) {
    Eigen::MatrixXd traj(log.rows.front().xi.size(), static_cast<int>(log.rows.size()));
    for (std::size_t k = 0; k < log.rows.size(); ++k) traj.col(static_cast<int>(k)) = log.rows[k].xi;
    out.J = SuperObjective(traj, 0.0, ep);
  }
  double ms = 0.0;
  int solves = 0;
  for (const SimRow& r : log.rows) {
    for (int i = 0; i < r.xi.size(); ++i) {
      out.max_state_violation = std::max(
          {out.max_state_violation, r.xi(i) - sc.state_upper(i), sc.state_lower(i) - r.xi(i)});
    }
    for (int i = 0; i < r.mu.size(); ++i) {
      out.max_input_violation = std::max(
          {out.max_input_violation, r.mu(i) - sc.input_upper(i), sc.input_lower(i) - r.mu(i)});
    }
    for (double v : r.solve_ms) {
      ms += v;
      ++solves;
    }
  }
  out.mean_solve_ms = solves > 0 ? ms / solves : 0.0;
  out.switches = static_cast<int>(std::count_if(
      log.switches.begin(), log.switches.end(), [](const SwitchEvent& e) { return e.from >= 0; }));
  return out;
}

std::string LogToCsv(const SimLog& log) {
  std::ostringstream os;
  os << "t";
  for (const auto& s : log.state_labels) os << "," << s;
  for (const auto& s : log.input_labels) os << "," << s;
  for (const auto& s : log.state_labels) os << ",nu_" << s;
  os << ",sigma";
  for (const auto& id : log.ids) os << ",V_" << id;
  for (const auto& id : log.ids) os << ",perm_" << id;
  for (const auto& id : log.ids) os << ",J_" << id;
  os << ",dz,dE";
  for (const auto& id : log.ids) os << ",qp_iters_" << id;
  os << "\n";
  for (const SimRow& r : log.rows) {
    os << Num(r.t);
    for (int i = 0; i < r.xi.size(); ++i) os << "," << Num(r.xi(i));
    for (int i = 0; i < r.mu.size(); ++i) os << "," << Num(r.mu(i));
    for (int i = 0; i < r.nu.size(); ++i) os << "," << Num(r.nu(i));
    os << "," << log.ids.at(r.sigma);
    for (double v : r.V) os << "," << Num(v);
    for (bool p : r.permission) os << "," << (p ? 1 : 0);
    for (double v : r.J) os << "," << Num(v);
    os << "," << Num(r.dz) << "," << Num(r.dE);
    for (int v : r.qp_iters) os << "," << v;
    os << "\n";
  }
  return os.str();
}

std::string LogMetadataJson(const SimLog& log, const Metrics& m,
                            const std::string& config_hash) {
  nlohmann::json j;
  j["config_hash"] = config_hash;
  j["seed"] = log.seed;
  j["mode"] = std::string(ToString(log.mode));
  j["selection"] = log.selection;
  j["controllers"] = nlohmann::json::array();
  for (std::size_t i = 0; i < log.ids.size(); ++i) {
    j["controllers"].push_back({{"id", log.ids[i]}, {"name", log.names[i]}});
  }
  j["rows"] = log.rows.size();
  j["switches"] = nlohmann::json::array();
  for (const SwitchEvent& e : log.switches) {
    j["switches"].push_back({{"t", e.t},
                             {"from", e.from >= 0 ? log.ids[e.from] : std::string()},
                             {"to", log.ids[e.to]}});
  }
  j["metrics"] = {{"J", m.J},
                  {"J_MJ", m.J / 1e6},
                  {"max_state_violation", m.max_state_violation},
                  {"max_input_violation", m.max_input_violation},
                  {"switches", m.switches},
                  {"mean_solve_ms", m.mean_solve_ms}};
  j["max_iter_warnings"] = log.max_iter_warnings;
  j["terminal_sets"] = nlohmann::json::parse(log.cert.ToJson());
  j["wall_time_s"] = log.wall_time_s;
  return j.dump(2) + "\n";
}

}  // namespace psmpc
