#include "psmpc/scenario.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include <toml.hpp>

#include "psmpc/errors.hpp"

namespace psmpc {
namespace {

constexpr std::string_view kSwitched = "pSMPC";
constexpr std::string_view kSinglePrefix = "single:";

[[noreturn]] void Fail(const std::string& where, const std::string& what) {
  throw ConfigError(where + ": " + what);
}

void CheckKeys(const toml::table& t, const std::string& where,
               const std::set<std::string>& allowed) {
  for (const auto& [key, node] : t) {
    if (!allowed.count(std::string(key.str()))) {
      Fail(where, "unknown key '" + std::string(key.str()) + "'");
    }
  }
}

const toml::table& Table(const toml::table& root, const std::string& key, bool required) {
  static const toml::table empty;
  const toml::node* n = root.get(key);
  if (n == nullptr) {
    if (required) Fail("scenario", "missing table [" + key + "]");
    return empty;
  }
  if (!n->is_table()) Fail("scenario", "'" + key + "' must be a table");
  return *n->as_table();
}

double Number(const toml::node& n, const std::string& where) {
  if (auto v = n.value<double>()) return *v;
  Fail(where, "expected a number");
}

std::optional<double> OptNumber(const toml::table& t, const std::string& key,
                                const std::string& where) {
  const toml::node* n = t.get(key);
  if (n == nullptr) return std::nullopt;
  return Number(*n, where + "." + key);
}

double ReqNumber(const toml::table& t, const std::string& key, const std::string& where) {
  auto v = OptNumber(t, key, where);
  if (!v) Fail(where, "missing '" + key + "'");
  return *v;
}

std::optional<std::int64_t> OptInt(const toml::table& t, const std::string& key,
                                   const std::string& where) {
  const toml::node* n = t.get(key);
  if (n == nullptr) return std::nullopt;
  if (auto v = n->value_exact<std::int64_t>()) return *v;
  Fail(where + "." + key, "expected an integer");
}

std::optional<std::string> OptString(const toml::table& t, const std::string& key,
                                     const std::string& where) {
  const toml::node* n = t.get(key);
  if (n == nullptr) return std::nullopt;
  if (auto v = n->value<std::string>()) return *v;
  Fail(where + "." + key, "expected a string");
}

Eigen::VectorXd Vector(const toml::node& n, const std::string& where) {
  const toml::array* a = n.as_array();
  if (a == nullptr) Fail(where, "expected an array of numbers");
  Eigen::VectorXd v(static_cast<int>(a->size()));
  for (std::size_t i = 0; i < a->size(); ++i) v(static_cast<int>(i)) = Number((*a)[i], where);
  return v;
}

Eigen::VectorXd ReqVector(const toml::table& t, const std::string& key,
                          const std::string& where) {
  const toml::node* n = t.get(key);
  if (n == nullptr) Fail(where, "missing '" + key + "'");
  return Vector(*n, where + "." + key);
}

Eigen::MatrixXd Matrix(const toml::node& n, const std::string& where) {
  const toml::array* a = n.as_array();
  if (a == nullptr || a->empty()) Fail(where, "expected a non-empty array of rows");
  std::vector<Eigen::VectorXd> rows;
  for (const toml::node& r : *a) rows.push_back(Vector(r, where));
  Eigen::MatrixXd M(static_cast<int>(rows.size()), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != M.cols()) Fail(where, "rows have different lengths");
    M.row(static_cast<int>(i)) = rows[i].transpose();
  }
  return M;
}

std::vector<std::string> Strings(const toml::table& t, const std::string& key,
                                 const std::string& where) {
  std::vector<std::string> out;
  const toml::node* n = t.get(key);
  if (n == nullptr) return out;
  const toml::array* a = n->as_array();
  if (a == nullptr) Fail(where + "." + key, "expected an array of strings");
  for (const toml::node& e : *a) {
    auto s = e.value<std::string>();
    if (!s) Fail(where + "." + key, "expected an array of strings");
    out.push_back(*s);
  }
  return out;
}

// Q/R either as a full matrix or as its diagonal.
Eigen::MatrixXd Weight(const toml::table& t, const std::string& name,
                       const std::string& where) {
  const toml::node* full = t.get(name);
  const toml::node* diag = t.get(name + "_diag");
  if ((full == nullptr) == (diag == nullptr)) {
    Fail(where, "give exactly one of '" + name + "' and '" + name + "_diag'");
  }
  if (full != nullptr) return Matrix(*full, where + "." + name);
  return Vector(*diag, where + "." + name + "_diag").asDiagonal();
}

toml::array ToArray(const Eigen::VectorXd& v) {
  toml::array a;
  for (int i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

toml::array ToArray(const Eigen::MatrixXd& M) {
  toml::array a;
  for (int r = 0; r < M.rows(); ++r) a.push_back(ToArray(Eigen::VectorXd(M.row(r).transpose())));
  return a;
}

toml::array ToArray(const std::vector<std::string>& v) {
  toml::array a;
  for (const auto& s : v) a.push_back(s);
  return a;
}

bool IsDiagonal(const Eigen::MatrixXd& M) {
  return M.rows() == M.cols() && M.isApprox(Eigen::MatrixXd(M.diagonal().asDiagonal()), 0.0);
}

}  // namespace

Mode ParseMode(const std::string& s) {
  if (s == "nominal") return Mode::kNominal;
  if (s == "robust") return Mode::kRobust;
  throw ConfigError("mode must be 'nominal' or 'robust', got '" + s + "'");
}

int ScenarioConfig::num_steps() const {
  return static_cast<int>(std::llround(t_final / dt_sim));
}

int ScenarioConfig::FindController(const std::string& key) const {
  for (std::size_t i = 0; i < controllers.size(); ++i) {
    if (controllers[i].id == key) return static_cast<int>(i);
  }
  for (std::size_t i = 0; i < controllers.size(); ++i) {
    if (controllers[i].name == key) return static_cast<int>(i);
  }
  return -1;
}

std::vector<int> ScenarioConfig::SelectedControllers() const {
  std::vector<int> out;
  if (selection == kSwitched) {
    for (const std::string& id : pool) {
      const int i = FindController(id);
      if (i < 0) throw ConfigError("pool entry '" + id + "' is not a controller");
      out.push_back(i);
    }
    return out;
  }
  if (selection.rfind(kSinglePrefix, 0) == 0) {
    const std::string key = selection.substr(kSinglePrefix.size());
    const int i = FindController(key);
    if (i < 0) throw ConfigError("unknown controller '" + key + "'");
    return {i};
  }
  throw ConfigError("controller selection must be 'pSMPC' or 'single:<id>', got '" +
                    selection + "'");
}

void SetSelection(ScenarioConfig& sc, const std::string& selection) {
  sc.selection = selection;
  sc.SelectedControllers();
}

void ScenarioConfig::Validate() const {
  try {
    plant.Validate();
  } catch (const InvalidModel& e) {
    throw ConfigError(std::string("plant: ") + e.what());
  }
  const int n = plant.num_states();
  const int m = plant.num_inputs();
  if (n == 0 || m == 0) throw ConfigError("plant: needs states and inputs");
  if (x0.size() != n || !x0.allFinite()) throw ConfigError("plant.x0 must have n finite entries");
  if (state_lower.size() != n || state_upper.size() != n) {
    throw ConfigError("constraints: state bounds need n entries");
  }
  if (input_lower.size() != m || input_upper.size() != m) {
    throw ConfigError("constraints: input bounds need m entries");
  }
  if (!(state_lower.array() < 0.0).all() || !(state_upper.array() > 0.0).all() ||
      !(input_lower.array() < 0.0).all() || !(input_upper.array() > 0.0).all()) {
    throw ConfigError("constraints: the origin must lie strictly inside every box");
  }
  if (!(dt_sim > 0.0) || !(dt_mpc > 0.0) || !(t_final > 0.0)) {
    throw ConfigError("simulation: dt_sim_s, dt_mpc_s and t_final_s must be positive");
  }
  const double ratio = dt_mpc / dt_sim;
  if (ratio < 1.0 - 1e-9 || std::abs(ratio - std::round(ratio)) > 1e-9) {
    throw ConfigError("simulation: dt_mpc_s must be an integer multiple of dt_sim_s");
  }
  if (std::abs(num_steps() * dt_sim - t_final) > 1e-9 * t_final) {
    throw ConfigError("simulation: t_final_s must be a multiple of dt_sim_s");
  }
  if (horizon < 2) throw ConfigError("simulation: horizon_steps must be >= 2");
  if (moas_max_t < 1) throw ConfigError("simulation: moas_max_steps must be >= 1");
  if (controllers.empty()) throw ConfigError("at least one [[controller]] is required");
  std::set<std::string> ids;
  for (const ControllerSpec& c : controllers) {
    const std::string where = "controller '" + c.id + "'";
    if (c.id.empty()) throw ConfigError("controller: id must not be empty");
    if (!ids.insert(c.id).second) throw ConfigError(where + ": duplicate id");
    if (c.Q.rows() != n || c.Q.cols() != n) throw ConfigError(where + ": Q must be n x n");
    if (c.R.rows() != m || c.R.cols() != m) throw ConfigError(where + ": R must be m x m");
    if (!(c.lambda > 0.0)) throw ConfigError(where + ": lambda must be positive");
    if (c.translator.size() != 0 && (c.translator.cols() != n)) {
      throw ConfigError(where + ": translator must have n columns");
    }
  }
  for (const std::string& id : pool) {
    if (FindController(id) < 0) throw ConfigError("supervisor.pool: unknown '" + id + "'");
  }
  SelectedControllers();
  if (disturbance.kind != DisturbanceSpec::Kind::kNone) {
    if (!(disturbance.std >= 0.0) || !std::isfinite(disturbance.mean)) {
      throw ConfigError("disturbance: std must be >= 0 and mean finite");
    }
    if (disturbance.input_index < 0 || disturbance.input_index >= m) {
      throw ConfigError("disturbance: input_index out of range");
    }
  }
  if (!(supervisor.sigma_w_nominal > 0.0) || !(supervisor.sigma_w_robust > 0.0) ||
      !(supervisor.c_gamma >= 0.0)) {
    throw ConfigError("supervisor: sigma_w must be positive and c_gamma >= 0");
  }
  energy.Validate(n);
}

ScenarioConfig ParseScenario(const std::string& text, const std::string& origin) {
  toml::table root;
  try {
    root = toml::parse(text, origin);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << e.description() << " (line " << e.source().begin.line << ")";
    throw ConfigError((origin.empty() ? "scenario" : origin) + ": " + os.str());
  }
  CheckKeys(root, "scenario",
            {"name", "simulation", "plant", "constraints", "controller", "supervisor",
             "energy", "disturbance"});

  ScenarioConfig sc;
  sc.name = OptString(root, "name", "scenario").value_or("");

  const toml::table& sim = Table(root, "simulation", true);
  CheckKeys(sim, "simulation",
            {"mode", "controller", "dt_sim_s", "dt_mpc_s", "t_final_s", "horizon_steps",
             "seed", "moas_max_steps"});
  sc.mode = ParseMode(OptString(sim, "mode", "simulation").value_or("nominal"));
  sc.selection = OptString(sim, "controller", "simulation").value_or(std::string(kSwitched));
  sc.dt_sim = ReqNumber(sim, "dt_sim_s", "simulation");
  sc.dt_mpc = ReqNumber(sim, "dt_mpc_s", "simulation");
  sc.t_final = ReqNumber(sim, "t_final_s", "simulation");
  sc.horizon = static_cast<int>(OptInt(sim, "horizon_steps", "simulation").value_or(40));
  const std::int64_t seed = OptInt(sim, "seed", "simulation").value_or(1);
  if (seed < 0) Fail("simulation.seed", "must be non-negative");
  sc.seed = static_cast<std::uint64_t>(seed);
  sc.moas_max_t = static_cast<int>(OptInt(sim, "moas_max_steps", "simulation").value_or(500));

  const toml::table& plant = Table(root, "plant", true);
  CheckKeys(plant, "plant", {"A", "B", "x0", "state_labels", "input_labels"});
  const toml::node* A = plant.get("A");
  const toml::node* B = plant.get("B");
  if (A == nullptr || B == nullptr) Fail("plant", "A and B are required");
  sc.plant.A = Matrix(*A, "plant.A");
  sc.plant.B = Matrix(*B, "plant.B");
  sc.plant.state_labels = Strings(plant, "state_labels", "plant");
  sc.plant.input_labels = Strings(plant, "input_labels", "plant");
  sc.x0 = ReqVector(plant, "x0", "plant");

  const toml::table& cons = Table(root, "constraints", true);
  CheckKeys(cons, "constraints", {"state_lower", "state_upper", "input_lower", "input_upper"});
  sc.state_lower = ReqVector(cons, "state_lower", "constraints");
  sc.state_upper = ReqVector(cons, "state_upper", "constraints");
  sc.input_lower = ReqVector(cons, "input_lower", "constraints");
  sc.input_upper = ReqVector(cons, "input_upper", "constraints");

  const toml::node* ctrl = root.get("controller");
  if (ctrl == nullptr || !ctrl->is_array_of_tables()) {
    Fail("scenario", "expected one or more [[controller]] tables");
  }
  for (const toml::node& node : *ctrl->as_array()) {
    const toml::table& t = *node.as_table();
    const std::string where = "controller";
    CheckKeys(t, where,
              {"id", "name", "Q", "Q_diag", "R", "R_diag", "lambda", "translator"});
    ControllerSpec c;
    const auto id = OptString(t, "id", where);
    if (!id) Fail(where, "missing 'id'");
    c.id = *id;
    c.name = OptString(t, "name", where).value_or(c.id);
    c.Q = Weight(t, "Q", where + " '" + c.id + "'");
    c.R = Weight(t, "R", where + " '" + c.id + "'");
    c.lambda = OptNumber(t, "lambda", where).value_or(10.0);
    if (const toml::node* tr = t.get("translator")) c.translator = Matrix(*tr, where + ".translator");
    sc.controllers.push_back(std::move(c));
  }

  const toml::table& sup = Table(root, "supervisor", false);
  CheckKeys(sup, "supervisor", {"pool", "sigma_w_nominal", "sigma_w_robust", "c_gamma"});
  sc.pool = Strings(sup, "pool", "supervisor");
  if (sc.pool.empty()) {
    for (const ControllerSpec& c : sc.controllers) sc.pool.push_back(c.id);
  }
  sc.supervisor.sigma_w_nominal =
      OptNumber(sup, "sigma_w_nominal", "supervisor").value_or(sc.supervisor.sigma_w_nominal);
  sc.supervisor.sigma_w_robust =
      OptNumber(sup, "sigma_w_robust", "supervisor").value_or(sc.supervisor.sigma_w_robust);
  sc.supervisor.c_gamma = OptNumber(sup, "c_gamma", "supervisor").value_or(sc.supervisor.c_gamma);

  const toml::table& en = Table(root, "energy", false);
  CheckKeys(en, "energy",
            {"mass_kg", "gravity_m_s2", "v_trim_m_s", "alpha_index", "speed_index",
             "theta_index", "angle_unit"});
  sc.energy.mass = OptNumber(en, "mass_kg", "energy").value_or(1000.0);
  sc.energy.gravity = OptNumber(en, "gravity_m_s2", "energy").value_or(9.81);
  sc.energy.v_trim = OptNumber(en, "v_trim_m_s", "energy").value_or(0.0);
  sc.energy.alpha_index = static_cast<int>(OptInt(en, "alpha_index", "energy").value_or(0));
  sc.energy.speed_index = static_cast<int>(OptInt(en, "speed_index", "energy").value_or(2));
  sc.energy.theta_index = static_cast<int>(OptInt(en, "theta_index", "energy").value_or(3));
  const std::string unit = OptString(en, "angle_unit", "energy").value_or("deg");
  if (unit == "deg") {
    sc.energy.angle_scale = std::numbers::pi / 180.0;
  } else if (unit == "rad") {
    sc.energy.angle_scale = 1.0;
  } else {
    Fail("energy.angle_unit", "must be 'deg' or 'rad'");
  }
  sc.energy.dt = sc.dt_mpc;

  const toml::table& dist = Table(root, "disturbance", false);
  CheckKeys(dist, "disturbance", {"kind", "mean", "std", "input_index"});
  const std::string kind = OptString(dist, "kind", "disturbance").value_or("none");
  if (kind == "none") {
    sc.disturbance.kind = DisturbanceSpec::Kind::kNone;
  } else if (kind == "gaussian_elevator") {
    sc.disturbance.kind = DisturbanceSpec::Kind::kGaussianElevator;
  } else {
    Fail("disturbance.kind", "must be 'none' or 'gaussian_elevator'");
  }
  sc.disturbance.mean = OptNumber(dist, "mean", "disturbance").value_or(0.0);
  sc.disturbance.std = OptNumber(dist, "std", "disturbance").value_or(0.0);
  sc.disturbance.input_index =
      static_cast<int>(OptInt(dist, "input_index", "disturbance").value_or(0));

  sc.Validate();
  return sc;
}

ScenarioConfig LoadScenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return ParseScenario(buf.str(), path);
}

std::string SerializeScenario(const ScenarioConfig& sc) {
  toml::table root;
  root.insert("name", sc.name);

  toml::table sim;
  sim.insert("mode", std::string(ToString(sc.mode)));
  sim.insert("controller", sc.selection);
  sim.insert("dt_sim_s", sc.dt_sim);
  sim.insert("dt_mpc_s", sc.dt_mpc);
  sim.insert("t_final_s", sc.t_final);
  sim.insert("horizon_steps", static_cast<std::int64_t>(sc.horizon));
  sim.insert("seed", static_cast<std::int64_t>(sc.seed));
  sim.insert("moas_max_steps", static_cast<std::int64_t>(sc.moas_max_t));
  root.insert("simulation", std::move(sim));

  toml::table plant;
  if (!sc.plant.state_labels.empty()) plant.insert("state_labels", ToArray(sc.plant.state_labels));
  if (!sc.plant.input_labels.empty()) plant.insert("input_labels", ToArray(sc.plant.input_labels));
  plant.insert("A", ToArray(sc.plant.A));
  plant.insert("B", ToArray(sc.plant.B));
  plant.insert("x0", ToArray(sc.x0));
  root.insert("plant", std::move(plant));

  toml::table cons;
  cons.insert("state_lower", ToArray(sc.state_lower));
  cons.insert("state_upper", ToArray(sc.state_upper));
  cons.insert("input_lower", ToArray(sc.input_lower));
  cons.insert("input_upper", ToArray(sc.input_upper));
  root.insert("constraints", std::move(cons));

  toml::array ctrls;
  for (const ControllerSpec& c : sc.controllers) {
    toml::table t;
    t.insert("id", c.id);
    t.insert("name", c.name);
    if (IsDiagonal(c.Q)) {
      t.insert("Q_diag", ToArray(Eigen::VectorXd(c.Q.diagonal())));
    } else {
      t.insert("Q", ToArray(c.Q));
    }
    if (IsDiagonal(c.R)) {
      t.insert("R_diag", ToArray(Eigen::VectorXd(c.R.diagonal())));
    } else {
      t.insert("R", ToArray(c.R));
    }
    t.insert("lambda", c.lambda);
    if (c.translator.size() != 0) t.insert("translator", ToArray(c.translator));
    ctrls.push_back(std::move(t));
  }
  root.insert("controller", std::move(ctrls));

  toml::table sup;
  sup.insert("pool", ToArray(sc.pool));
  sup.insert("sigma_w_nominal", sc.supervisor.sigma_w_nominal);
  sup.insert("sigma_w_robust", sc.supervisor.sigma_w_robust);
  sup.insert("c_gamma", sc.supervisor.c_gamma);
  root.insert("supervisor", std::move(sup));

  toml::table en;
  en.insert("mass_kg", sc.energy.mass);
  en.insert("gravity_m_s2", sc.energy.gravity);
  en.insert("v_trim_m_s", sc.energy.v_trim);
  en.insert("alpha_index", static_cast<std::int64_t>(sc.energy.alpha_index));
  en.insert("speed_index", static_cast<std::int64_t>(sc.energy.speed_index));
  en.insert("theta_index", static_cast<std::int64_t>(sc.energy.theta_index));
  en.insert("angle_unit", sc.energy.angle_scale == 1.0 ? "rad" : "deg");
  root.insert("energy", std::move(en));

  toml::table dist;
  dist.insert("kind", sc.disturbance.kind == DisturbanceSpec::Kind::kNone
                          ? "none"
                          : "gaussian_elevator");
  dist.insert("mean", sc.disturbance.mean);
  dist.insert("std", sc.disturbance.std);
  dist.insert("input_index", static_cast<std::int64_t>(sc.disturbance.input_index));
  root.insert("disturbance", std::move(dist));

  std::ostringstream os;
  os << root << "\n";
  return os.str();
}

}  // namespace psmpc
