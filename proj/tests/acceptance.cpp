// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "psmpc/errors.hpp"
#include "psmpc/ocp.hpp"
#include "psmpc/polytope.hpp"
#include "psmpc/qp.hpp"
#include "psmpc/scenario.hpp"
#include "psmpc/simulator.hpp"
#include "psmpc/supervisor.hpp"
#include "psmpc/terminal_ingredients.hpp"

namespace psmpc {
namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string Fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

ScenarioConfig Shipped(const std::string& file) {
  return LoadScenario(std::string(PSMPC_SCENARIO_DIR) + "/" + file);
}

// One prediction step per simulation step, so the plant flow and the
// prediction model coincide.
ScenarioConfig Coarse(ScenarioConfig sc) {
  sc.dt_sim = sc.dt_mpc;
  sc.Validate();
  return sc;
}

std::string Body(const std::string& csv) { return csv.substr(csv.find('\n') + 1); }

// Replays the supervisor's permission rule over a log. Every activation of a
// controller that was active before must satisfy the rule with the values
// that were logged at the time.
struct Replay {
  int activations = 0;
  int checked = 0;
  int failed = 0;
};

Replay ReplayActivations(const SimLog& log, const std::function<bool(const SimRow&, int,
                                                                     const ActivationRecord&)>& ok) {
  Replay out;
  std::vector<ActivationRecord> rec(log.ids.size());
  int active = -1;
  for (const SimRow& r : log.rows) {
    if (r.sigma == active) continue;
    active = r.sigma;
    ++out.activations;
    ActivationRecord& a = rec[active];
    if (a.ever_activated) {
      ++out.checked;
      if (!ok(r, active, a)) ++out.failed;
    }
    a.ever_activated = true;
    a.t = r.t;
    a.V = r.V[active];
    a.x = r.xi;
  }
  return out;
}

// Cached closed-loop runs shared between criteria.
struct Shared {
  std::map<std::string, SimLog> runs;
  std::map<std::string, double> J;
  double wall_s = 0.0;
};

Outcome Criterion1(Shared& sh) {
  const auto start = std::chrono::steady_clock::now();
  for (const char* mode : {"nominal", "robust"}) {
    ScenarioConfig sc = Shipped(std::string("aircraft_") + mode + ".toml");
    for (const char* sel : {"single:eq", "single:1", "single:2", "pSMPC"}) {
      SetSelection(sc, sel);
      const std::string key = std::string(mode) + "/" + sel;
      sh.runs[key] = RunClosedLoop(sc);
      sh.J[key] = EvaluateMetrics(sh.runs[key], sc).J;
    }
  }
  sh.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const auto J = [&](const std::string& m, const std::string& s) { return sh.J[m + "/" + s]; };
  const bool nominal = J("nominal", "pSMPC") <= J("nominal", "single:2") &&
                       J("nominal", "single:2") < J("nominal", "single:eq") &&
                       J("nominal", "single:eq") < J("nominal", "single:1");
  const double robust_others = std::min(
      {J("robust", "single:eq"), J("robust", "single:1"), J("robust", "single:2")});
  const bool robust = J("robust", "pSMPC") <= robust_others;
  std::ostringstream d;
  d << "nominal MJ pSMPC/High-R/Equal-I/High-Q = " << Fmt("%.3f", J("nominal", "pSMPC") / 1e6)
    << "/" << Fmt("%.3f", J("nominal", "single:2") / 1e6) << "/"
    << Fmt("%.3f", J("nominal", "single:eq") / 1e6) << "/"
    << Fmt("%.3f", J("nominal", "single:1") / 1e6) << "; robust pSMPC "
    << Fmt("%.3f", J("robust", "pSMPC") / 1e6) << " vs best other "
    << Fmt("%.3f", robust_others / 1e6) << "; wall " << Fmt("%.1f", sh.wall_s) << " s";
  return {nominal && robust && sh.wall_s < 600.0, d.str()};
}

Outcome Criterion2() {
  ScenarioConfig sc = Coarse(Shipped("aircraft_nominal.toml"));
  sc.pool = {"eq", "1", "2"};
  SetSelection(sc, "pSMPC");
  const ControllerSet set = SynthesizeControllers(sc);
  const int count = static_cast<int>(set.configs.size());
  int infeasible = 0;
  int solves = 0;
  int switches = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    sc.seed = seed;
    SimHooks hooks;
    int current = -1;
    hooks.choice_override = [&](const SwitchDecision&, std::mt19937_64& rng) {
      // Uniform over every controller except the current one.
      int pick = static_cast<int>(rng() % static_cast<std::uint64_t>(count - (current >= 0)));
      if (current >= 0 && pick >= current) ++pick;
      current = pick;
      return pick;
    };
    hooks.on_step = [&](const StepTrace& tr) {
      for (const OcpSolution& s : *tr.solutions) {
        ++solves;
        infeasible += !s.feasible;
      }
    };
    try {
      const SimLog log = RunClosedLoop(sc, set, hooks);
      switches += static_cast<int>(log.switches.size()) - 1;
    } catch (const RecursiveFeasibilityViolation& e) {
      ++infeasible;
    }
  }
  return {infeasible == 0, std::to_string(solves) + " composed solves over 10 seeds x " +
                               Fmt("%.0f", sc.t_final) + " s, " + std::to_string(switches) +
                               " switches, " + std::to_string(infeasible) + " infeasible"};
}

// Shifted candidate of the applied solution at step k, checked against every
// composed problem at step k+1.
struct ShiftCheck {
  int checks = 0;
  double worst = 0.0;
};

void CheckShifts(const ScenarioConfig& sc, const ControllerSet& set, SimHooks hooks,
                 ShiftCheck& out) {
  bool have_prev = false;
  OcpSolution prev;
  int prev_applied = -1;
  hooks.on_step = [&](const StepTrace& tr) {
    if (have_prev) {
      const Eigen::MatrixXd U = ShiftedCandidate(prev, set.configs[prev_applied]);
      for (const OcpProblem& p : *tr.problems) {
        const Eigen::VectorXd z = CandidateVector(p, U);
        out.worst = std::max(out.worst, MaxConstraintViolation(p.qp, z));
        ++out.checks;
      }
    }
    prev = (*tr.solutions)[tr.applied];
    prev_applied = tr.applied;
    have_prev = true;
  };
  RunClosedLoop(sc, set, hooks);
}

Outcome Criterion3() {
  ScenarioConfig sc = Coarse(Shipped("aircraft_nominal.toml"));
  ShiftCheck out;
  CheckShifts(sc, SynthesizeControllers(sc), {}, out);
  // The same under random switching across all three controllers.
  sc.pool = {"eq", "1", "2"};
  SetSelection(sc, "pSMPC");
  SimHooks random;
  random.choice_override = [](const SwitchDecision& d, std::mt19937_64& rng) {
    return static_cast<int>(rng() % d.permissions.size());
  };
  CheckShifts(sc, SynthesizeControllers(sc), random, out);
  return {out.checks > 0 && out.worst <= 1e-7,
          std::to_string(out.checks) + " candidate checks, worst violation " +
              Fmt("%.2e", out.worst)};
}

Outcome Criterion4(const Shared& sh) {
  ScenarioConfig sc = Coarse(Shipped("aircraft_nominal.toml"));
  double worst = -kInf;
  int steps = 0;
  for (const ControllerSpec& c : sc.controllers) {
    ScenarioConfig one = sc;
    SetSelection(one, "single:" + c.id);
    const SimLog log = RunClosedLoop(one);
    for (std::size_t k = 0; k + 1 < log.rows.size(); ++k) {
      const SimRow& a = log.rows[k];
      const SimRow& b = log.rows[k + 1];
      const double lhs = b.V[0] - a.V[0] + a.xi.dot(c.Q * a.xi);
      worst = std::max(worst, lhs / (1.0 + a.V[0]));
      ++steps;
    }
  }
  const bool decrease = worst <= 1e-6;

  const double sigma_w = sc.supervisor.sigma_w_nominal;
  Replay total;
  for (const char* key : {"nominal/pSMPC"}) {
    const Replay r = ReplayActivations(
        sh.runs.at(key), [&](const SimRow& row, int j, const ActivationRecord& rec) {
          return PermissionNominal(row.V[j], rec, sigma_w);
        });
    total.activations += r.activations;
    total.checked += r.checked;
    total.failed += r.failed;
  }
  // With all three controllers in the pool the supervisor re-activates
  // controllers, which exercises the rule on stored records.
  ScenarioConfig pool3 = Shipped("aircraft_nominal.toml");
  pool3.pool = {"eq", "1", "2"};
  SetSelection(pool3, "pSMPC");
  const SimLog three = RunClosedLoop(pool3);
  const Replay r3 = ReplayActivations(three, [&](const SimRow& row, int j,
                                                 const ActivationRecord& rec) {
    return PermissionNominal(row.V[j], rec, sigma_w);
  });
  total.activations += r3.activations;
  total.checked += r3.checked;
  total.failed += r3.failed;

  return {decrease && total.checked > 0 && total.failed == 0,
          std::to_string(steps) + " single-controller steps, worst normalized decrease residual " +
              Fmt("%.2e", worst) + "; " + std::to_string(total.activations) +
              " pSMPC activations, " + std::to_string(total.checked) + " re-activations replayed, " +
              std::to_string(total.failed) + " violations"};
}

Outcome Criterion5(const Shared& sh) {
  const double sigma_w = 1e-3;
  const double c_gamma = 1e4;
  const ScenarioConfig sc = Shipped("aircraft_robust.toml");
  const bool params = sc.supervisor.sigma_w_robust == sigma_w && sc.supervisor.c_gamma == c_gamma;
  const Replay r = ReplayActivations(
      sh.runs.at("robust/pSMPC"), [&](const SimRow& row, int j, const ActivationRecord& rec) {
        return PermissionRobust(row.V[j], rec, sigma_w, c_gamma, row.nu);
      });

  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 3.0);
  int mismatches = 0;
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(4);
  for (int k = 0; k < 10000; ++k) {
    ActivationRecord rec;
    rec.ever_activated = k % 10 != 0;
    rec.x = Eigen::VectorXd::NullaryExpr(4, [&] { return g(rng); });
    rec.V = std::abs(g(rng)) * 10.0;
    const double V_now = std::abs(g(rng)) * 10.0;
    mismatches += PermissionRobust(V_now, rec, sigma_w, c_gamma, zero) !=
                  PermissionNominal(V_now, rec, sigma_w);
  }
  return {params && r.failed == 0 && mismatches == 0,
          std::to_string(r.activations) + " robust activations, " + std::to_string(r.checked) +
              " re-activations replayed, " + std::to_string(r.failed) +
              " violations; nu = 0 mismatches " + std::to_string(mismatches) + " / 10000"};
}

Outcome Criterion6() {
  ScenarioConfig sc = Shipped("aircraft_robust.toml");
  sc.t_final = 10.0;
  const ControllerSet set = SynthesizeControllers(sc);
  const int tail = static_cast<int>(std::lround(1.0 / sc.dt_sim));
  std::vector<double> bounds;
  int solves = 0;
  int unsolved = 0;
  for (double std : {0.25, 0.5, 1.0}) {
    sc.disturbance.std = std;
    double sum = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      sc.seed = seed;
      SimHooks hooks;
      hooks.on_step = [&](const StepTrace& tr) {
        for (const OcpSolution& s : *tr.solutions) {
          ++solves;
          unsolved += s.stats.status != QpStatus::kSolved;
        }
      };
      const SimLog log = RunClosedLoop(sc, set, hooks);
      double m = 0.0;
      for (std::size_t k = log.rows.size() - tail; k < log.rows.size(); ++k) {
        m += log.rows[k].xi.norm();
      }
      sum += m / tail;
    }
    bounds.push_back(sum / 5.0);
  }
  bool ok = unsolved == 0;
  for (std::size_t i = 0; i < bounds.size(); ++i) {
    ok = ok && std::isfinite(bounds[i]) && (i == 0 || bounds[i] >= bounds[i - 1]);
  }
  return {ok, "ultimate bound |xi| at std 0.25/0.5/1.0 deg = " + Fmt("%.4f", bounds[0]) + "/" +
                  Fmt("%.4f", bounds[1]) + "/" + Fmt("%.4f", bounds[2]) + "; " +
                  std::to_string(solves - unsolved) + "/" + std::to_string(solves) +
                  " robust solves Solved"};
}

bool SimulationAdmissible(const TerminalKit& kit, const Polytope& X, const Polytope& U,
                          Eigen::VectorXd x, int steps) {
  for (int k = 0; k <= steps; ++k) {
    if (!X.Contains(x, 1e-9) || !U.Contains(-kit.K * x, 1e-9)) return false;
    x = kit.Acl * x;
  }
  return true;
}

Outcome Criterion7() {
  const ScenarioConfig sc = Shipped("aircraft_nominal.toml");
  std::vector<int> all(sc.controllers.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  const ControllerSet set = SynthesizeControllers(sc, all);

  double dare = 0.0;
  int bad_samples = 0;
  int samples = 0;
  std::mt19937 rng(17);
  std::vector<Polytope> sets;
  for (const MpcConfig& c : set.configs) {
    dare = std::max(dare, c.kit.dare_residual);
    sets.push_back(SynthesizeKit(c.model, c.Q, c.R, c.X, c.U, sc.moas_max_t).Xn);
  }
  sets.push_back(set.configs.front().kit.Xn);  // the set the runs use
  for (std::size_t s = 0; s < sets.size(); ++s) {
    const Polytope& Xn = sets[s];
    const auto pts = testing::HitAndRun(Xn.H(), Xn.h(), Eigen::VectorXd::Zero(4), 10000, rng);
    // Per-controller sets are checked under their own controller, the common
    // set under every controller.
    for (std::size_t i = 0; i < set.configs.size(); ++i) {
      if (s < set.configs.size() && s != i) continue;
      const MpcConfig& c = set.configs[i];
      for (const Eigen::VectorXd& x : pts) {
        ++samples;
        bad_samples += !(Xn.Contains(c.kit.Acl * x, kCertTol) && c.X.Contains(x, kCertTol) &&
                         c.U.Contains(-c.kit.K * x, kCertTol));
      }
    }
  }

  DiscreteModel di;
  di.Ad = (Eigen::MatrixXd(2, 2) << 1, 1, 0, 1).finished();
  di.Bd = (Eigen::MatrixXd(2, 1) << 0.5, 1).finished();
  di.dt = 1.0;
  const Polytope X = Polytope::FromBox(Eigen::Vector2d(-1, -1), Eigen::Vector2d(1, 1));
  const Polytope U = Polytope::FromBox(Eigen::VectorXd::Constant(1, -1),
                                       Eigen::VectorXd::Constant(1, 1));
  const TerminalKit kit =
      SynthesizeKit(di, Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd::Identity(1, 1), X, U);
  int agree = 0;
  int counted = 0;
  for (int i = 1; i < 200; ++i) {
    for (int j = 1; j < 200; ++j) {
      const Eigen::Vector2d x(-1.0 + 0.01 * i, -1.0 + 0.01 * j);
      if ((kit.Xn.H() * x - kit.Xn.h()).cwiseAbs().minCoeff() < 1e-6) continue;
      ++counted;
      agree += kit.Xn.Contains(x) == SimulationAdmissible(kit, X, U, x, 200);
    }
  }
  const double grid = static_cast<double>(agree) / counted;

  const bool ok = dare <= 1e-9 && bad_samples == 0 && grid >= 0.99 && set.cert.passed() &&
                  kit.dare_residual <= 1e-9;
  return {ok, "max DARE residual " + Fmt("%.2e", dare) + "; " + std::to_string(bad_samples) +
                  "/" + std::to_string(samples) + " sampled points violate; grid agreement " +
                  Fmt("%.4f", grid) + "; cross-invariance " +
                  (set.cert.passed() ? "passes" : "fails") + " (beta " +
                  Fmt("%.3g", set.cert.beta) + (set.cert.common_set ? ", common set)" : ")")};
}

Outcome Criterion8() {
  double worst = 0.0;
  int unsolved = 0;
  const auto check = [&](const QpProblem& p) {
    const QpSolution s = SolveQp(p);
    unsolved += !s.solved();
    const KktResiduals r = ComputeKktResiduals(p, s);
    worst = std::max({worst, r.primal, r.dual, r.comp_slack});
  };
  check(QpProblem::FromDense(Eigen::MatrixXd::Identity(2, 2), Eigen::Vector2d(-1, -2),
                             Eigen::MatrixXd::Identity(2, 2), Eigen::VectorXd::Constant(2, -kInf),
                             Eigen::VectorXd::Constant(2, kInf)));
  check(QpProblem::FromDense(Eigen::MatrixXd::Ones(1, 1), Eigen::VectorXd::Constant(1, -1.0),
                             Eigen::MatrixXd::Ones(1, 1), Eigen::VectorXd::Constant(1, -kInf),
                             Eigen::VectorXd::Zero(1)));
  check(QpProblem::FromDense(Eigen::MatrixXd::Identity(2, 2), Eigen::VectorXd::Zero(2),
                             Eigen::MatrixXd::Ones(1, 2), Eigen::VectorXd::Ones(1),
                             Eigen::VectorXd::Ones(1)));
  std::mt19937 rng(2024);
  for (int k = 0; k < 100; ++k) {
    const int p = std::uniform_int_distribution<int>(2, 30)(rng);
    const int q = std::uniform_int_distribution<int>(1, 2 * p)(rng);
    const int rank = std::uniform_int_distribution<int>(1, p)(rng);
    const testing::PlantedQp pq = testing::MakePlantedQp(rng, p, q, rank);
    check(QpProblem::FromDense(pq.H, pq.g, pq.C, pq.lb, pq.ub));
  }

  std::mt19937 lrng(5);
  std::normal_distribution<double> nd;
  double lp_err = 0.0;
  int lps = 0;
  for (int n = 1; n <= 3; ++n) {
    for (int trial = 0; trial < 30; ++trial) {
      const int extra = 3 + trial % 6;
      Eigen::MatrixXd H(2 * n + extra, n);
      Eigen::VectorXd h(2 * n + extra);
      H.topRows(n) = Eigen::MatrixXd::Identity(n, n);
      H.middleRows(n, n) = -Eigen::MatrixXd::Identity(n, n);
      h.head(2 * n).setOnes();
      for (int r = 0; r < extra; ++r) {
        H.row(2 * n + r) = Eigen::RowVectorXd::NullaryExpr(n, [&] { return nd(lrng); });
        h(2 * n + r) = 0.2 + std::abs(nd(lrng));
      }
      const Eigen::VectorXd d = Eigen::VectorXd::NullaryExpr(n, [&] { return nd(lrng); });
      const auto oracle = testing::VertexEnumerationSupport(H, h, d);
      if (!oracle) continue;
      lp_err = std::max(lp_err, std::abs(Polytope(H, h).Support(d) - *oracle) /
                                    std::max(1.0, std::abs(*oracle)));
      ++lps;
    }
  }
  return {unsolved == 0 && worst <= 1e-6 && lp_err <= 1e-9,
          "103 QPs, worst KKT residual " + Fmt("%.2e", worst) + ", " + std::to_string(unsolved) +
              " unsolved; " + std::to_string(lps) + " LP supports, worst relative error " +
              Fmt("%.2e", lp_err)};
}

Outcome Criterion9(const Shared& sh) {
  const ScenarioConfig sc = Shipped("aircraft_robust.toml");
  const std::string a = Body(LogToCsv(sh.runs.at("robust/pSMPC")));
  SimHooks one;
  one.threads = 1;
  const std::string b = Body(LogToCsv(RunClosedLoop(sc, one)));
  return {!a.empty() && a == b, "robust pSMPC log bodies " + std::to_string(a.size()) + " and " +
                                    std::to_string(b.size()) + " bytes, " +
                                    (a == b ? "identical" : "different")};
}

}  // namespace
}  // namespace psmpc

int main() {
  using namespace psmpc;
  Shared shared;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"1 energy ordering on the surrogate aircraft", [&] { return Criterion1(shared); }},
      {"2 composed problems stay feasible under random switching", [] { return Criterion2(); }},
      {"3 shifted candidate is feasible at the next step", [] { return Criterion3(); }},
      {"4 Lyapunov decrease and nominal switching permissions",
       [&] { return Criterion4(shared); }},
      {"5 robust switching permissions", [&] { return Criterion5(shared); }},
      {"6 ultimate bound grows with disturbance size", [] { return Criterion6(); }},
      {"7 terminal ingredient certificates", [] { return Criterion7(); }},
      {"8 QP and LP correctness", [] { return Criterion8(); }},
      {"9 deterministic logs", [&] { return Criterion9(shared); }},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s  criterion %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(),
                o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed,
              criteria.size());
  return failed == 0 ? 0 : 1;
}
