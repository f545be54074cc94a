#include "app.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <vector>

#include <openssl/evp.h>

#include <json.hpp>

#include "plot.hpp"
#include "psmpc/errors.hpp"

namespace psmpc::app {
namespace fs = std::filesystem;

namespace {

void WriteFile(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path.string());
  f << text;
  if (!f) throw Error("failed writing " + path.string());
}

void PrepareDir(const std::string& dir) {
  if (dir.empty()) throw ConfigError("--out is required");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory '" + dir + "': " + ec.message());
}

std::vector<double> Times(const SimLog& log) {
  std::vector<double> t;
  for (const SimRow& r : log.rows) t.push_back(r.t);
  return t;
}

plot::Series EnergySeries(const SimLog& log, const std::string& name) {
  plot::Series s{name, Times(log), {}, false};
  for (const SimRow& r : log.rows) s.y.push_back(r.dE / 1e3);
  return s;
}

std::string Label(const ScenarioConfig& sc) {
  if (sc.selection.rfind("single:", 0) == 0) {
    return sc.controllers[sc.SelectedControllers().front()].name;
  }
  return sc.selection;
}

// Runs a configured scenario; maps library errors to exit codes.
template <typename Body>
int Guard(std::ostream& err, Body body) {
  try {
    return body();
  } catch (const RecursiveFeasibilityViolation& e) {
    err << "error: recursive feasibility violated: " << e.what() << "\n";
    return kInfeasibleSwitching;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
}

ScenarioConfig Resolve(const std::string& path, std::optional<std::uint64_t> seed,
                       const std::optional<std::string>& controller,
                       const std::optional<std::string>& mode) {
  ScenarioConfig sc = LoadScenario(path);
  if (seed) sc.seed = *seed;
  if (mode) sc.mode = ParseMode(*mode);
  if (controller) SetSelection(sc, *controller);
  sc.Validate();
  return sc;
}

nlohmann::json Manifest(const std::string& scenario_path, const ScenarioConfig& sc,
                        const std::vector<std::string>& outputs) {
  nlohmann::json j;
  j["scenario_path"] = scenario_path;
  j["config_hash"] = ConfigHash(sc);
  j["resolved_config"] = SerializeScenario(sc);
  j["outputs"] = outputs;
  return j;
}

}  // namespace

std::string GitBlobHash(const std::string& body) {
  const std::string blob = "blob " + std::to_string(body.size()) + std::string(1, '\0') + body;
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(blob.data(), blob.size(), digest, &len, EVP_sha1(), nullptr) != 1) {
    throw Error("SHA-1 digest failed");
  }
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) {
    os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return os.str();
}

std::string ConfigHash(const ScenarioConfig& sc) { return GitBlobHash(SerializeScenario(sc)); }

void EmitPlotData(const SimLog& log, const std::string& dir, const std::string& stem) {
  const fs::path base(dir);
  plot::Figure energy{"Energy deviation", "t [s]", "dE [kJ]", {EnergySeries(log, "dE")}, {}};
  WriteFile(base / (stem + "energy.csv"), plot::ToCsv(energy));
  WriteFile(base / (stem + "energy.svg"), plot::ToSvg(energy));

  plot::Figure sw{"Switching signal", "t [s]", "active controller", {}, log.names};
  plot::Series sigma{"sigma", Times(log), {}, true};
  for (const SimRow& r : log.rows) sigma.y.push_back(r.sigma);
  sw.series.push_back(sigma);
  WriteFile(base / (stem + "switching.svg"), plot::ToSvg(sw));

  plot::Figure perm{"Switching permission", "t [s]", "permission", {}, {"0", "1"}};
  for (std::size_t i = 0; i < log.ids.size(); ++i) {
    plot::Series p{"perm_" + log.ids[i], Times(log), {}, true};
    for (const SimRow& r : log.rows) p.y.push_back(r.permission[i] ? 1.0 : 0.0);
    perm.series.push_back(p);
  }
  WriteFile(base / (stem + "permission.svg"), plot::ToSvg(perm));

  plot::Figure table = perm;
  table.series.insert(table.series.begin(), sigma);
  WriteFile(base / (stem + "switching.csv"), plot::ToCsv(table));
}

int CmdRun(const RunOptions& opt, std::ostream& out, std::ostream& err) {
  return Guard(err, [&] {
    const ScenarioConfig sc = Resolve(opt.scenario, opt.seed, opt.controller, opt.mode);
    PrepareDir(opt.out);
    SimHooks hooks;
    hooks.threads = opt.threads;
    const SimLog log = RunClosedLoop(sc, hooks);
    const Metrics m = EvaluateMetrics(log, sc);

    const fs::path dir(opt.out);
    WriteFile(dir / "log.csv", LogToCsv(log));
    EmitPlotData(log, opt.out, "");
    nlohmann::json meta = nlohmann::json::parse(LogMetadataJson(log, m, ConfigHash(sc)));
    meta["manifest"] = Manifest(opt.scenario, sc,
                                {"log.csv", "run.json", "energy.csv", "energy.svg",
                                 "switching.csv", "switching.svg", "permission.svg"});
    WriteFile(dir / "run.json", meta.dump(2) + "\n");

    out << "scenario   " << sc.name << " (" << ToString(sc.mode) << ", " << Label(sc) << ")\n";
    out << "J          " << std::fixed << std::setprecision(4) << m.J / 1e6 << " MJ\n";
    out << "switches   " << m.switches << "\n";
    out << std::scientific << std::setprecision(2);
    out << "max viol.  state " << m.max_state_violation << ", input " << m.max_input_violation
        << "\n";
    out << std::defaultfloat;
    if (log.max_iter_warnings > 0) {
      err << "warning: " << log.max_iter_warnings << " QP solves hit the iteration limit\n";
    }
    out << "output     " << opt.out << "\n";
    return static_cast<int>(kOk);
  });
}

int CmdCompare(const CompareOptions& opt, std::ostream& out, std::ostream& err) {
  return Guard(err, [&] {
    ScenarioConfig base = Resolve(opt.scenario, opt.seed, std::nullopt, std::nullopt);
    PrepareDir(opt.out);
    const fs::path dir(opt.out);

    struct Entry {
      std::string label;
      std::string id;
      std::string selection;
    };
    std::vector<Entry> entries;
    for (const ControllerSpec& c : base.controllers) {
      entries.push_back({c.name, c.id, "single:" + c.id});
    }
    if (base.pool.size() > 1) entries.push_back({"pSMPC", "", "pSMPC"});

    struct Result {
      double J = 0.0;
      int switches = 0;
      double viol = 0.0;
    };
    std::vector<std::vector<Result>> results(entries.size(), std::vector<Result>(2));
    nlohmann::json runs = nlohmann::json::array();
    std::vector<std::string> outputs;
    const Mode modes[] = {Mode::kNominal, Mode::kRobust};
    for (int mi = 0; mi < 2; ++mi) {
      plot::Figure energy{std::string("Energy deviation (") + std::string(ToString(modes[mi])) +
                              ")",
                          "t [s]", "dE [kJ]", {}, {}};
      for (std::size_t e = 0; e < entries.size(); ++e) {
        ScenarioConfig sc = base;
        sc.mode = modes[mi];
        SetSelection(sc, entries[e].selection);
        SimHooks hooks;
        hooks.threads = opt.threads;
        const SimLog log = RunClosedLoop(sc, hooks);
        const Metrics m = EvaluateMetrics(log, sc);
        results[e][mi] = {m.J, m.switches, std::max(m.max_state_violation, m.max_input_violation)};
        const std::string stem =
            std::string(ToString(modes[mi])) + "_" + (entries[e].id.empty() ? "pSMPC" : entries[e].id);
        WriteFile(dir / (stem + ".csv"), LogToCsv(log));
        outputs.push_back(stem + ".csv");
        if (entries[e].id.empty()) {
          EmitPlotData(log, opt.out, stem + "_");
          for (const char* f : {"energy.csv", "energy.svg", "switching.csv", "switching.svg",
                                "permission.svg"}) {
            outputs.push_back(stem + "_" + f);
          }
        }
        energy.series.push_back(EnergySeries(log, entries[e].label));
        runs.push_back({{"mode", std::string(ToString(modes[mi]))},
                        {"controller", entries[e].label},
                        {"J_MJ", m.J / 1e6},
                        {"switches", m.switches},
                        {"max_iter_warnings", log.max_iter_warnings}});
        err << "  " << ToString(modes[mi]) << " " << entries[e].label << ": " << m.J / 1e6
            << " MJ\n";
      }
      const std::string stem = "energy_" + std::string(ToString(modes[mi]));
      WriteFile(dir / (stem + ".csv"), plot::ToCsv(energy));
      WriteFile(dir / (stem + ".svg"), plot::ToSvg(energy));
      outputs.push_back(stem + ".csv");
      outputs.push_back(stem + ".svg");
    }

    std::ostringstream csv;
    csv << "controller,id,mode,J_MJ,switches,max_violation\n";
    for (std::size_t e = 0; e < entries.size(); ++e) {
      for (int mi = 0; mi < 2; ++mi) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.17g", results[e][mi].J / 1e6);
        csv << entries[e].label << "," << entries[e].id << "," << ToString(modes[mi]) << ","
            << buf << "," << results[e][mi].switches << "," << results[e][mi].viol << "\n";
      }
    }

    std::ostringstream txt;
    std::size_t width = 10;
    for (const Entry& e : entries) width = std::max(width, e.label.size());
    txt << std::left << std::setw(static_cast<int>(width) + 2) << "Controller" << std::setw(6)
        << "ID" << std::right << std::setw(14) << "Nominal [MJ]" << std::setw(14)
        << "Robust [MJ]" << "\n";
    for (std::size_t e = 0; e < entries.size(); ++e) {
      txt << std::left << std::setw(static_cast<int>(width) + 2) << entries[e].label
          << std::setw(6) << (entries[e].id.empty() ? "-" : entries[e].id) << std::right
          << std::fixed << std::setprecision(4);
      for (int mi = 0; mi < 2; ++mi) {
        double best = results[0][mi].J;
        for (const auto& r : results) best = std::min(best, r[mi].J);
        std::ostringstream cell;
        cell << std::fixed << std::setprecision(4) << results[e][mi].J / 1e6
             << (results[e][mi].J == best ? "*" : " ");
        txt << std::setw(14) << cell.str();
      }
      txt << "\n";
    }
    txt << "(* column minimum)\n";

    WriteFile(dir / "summary.csv", csv.str());
    WriteFile(dir / "summary.txt", txt.str());
    outputs.push_back("summary.csv");
    outputs.push_back("summary.txt");
    outputs.push_back("compare.json");
    nlohmann::json meta;
    meta["manifest"] = Manifest(opt.scenario, base, outputs);
    meta["runs"] = runs;
    WriteFile(dir / "compare.json", meta.dump(2) + "\n");
    out << txt.str();
    return static_cast<int>(kOk);
  });
}

int CmdCertify(const CertifyOptions& opt, std::ostream& out, std::ostream& err) {
  return Guard(err, [&] {
    ScenarioConfig sc = LoadScenario(opt.scenario);
    std::vector<int> all(sc.controllers.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
    const ControllerSet set = SynthesizeControllers(sc, all);

    out << "Terminal ingredients\n";
    bool dare_ok = true;
    for (const MpcConfig& c : set.configs) {
      const bool ok = c.kit.dare_residual <= 1e-9;
      dare_ok = dare_ok && ok;
      out << "  " << std::left << std::setw(10) << c.id << std::setw(12) << c.name
          << " DARE residual " << std::scientific << std::setprecision(3)
          << c.kit.dare_residual << (ok ? "" : " (too large)") << std::defaultfloat
          << "   MOAS t* = " << c.kit.t_star << ", terminal set " << c.kit.Xn.num_rows() << " faces\n";
    }
    out << "\nAs synthesized:\n" << set.initial_cert.ToText();
    const CertReport& final_report = opt.no_repair ? set.initial_cert : set.cert;
    if (!opt.no_repair && !set.initial_cert.passed()) {
      out << "\nAfter repair:\n" << set.cert.ToText();
    }
    if (!opt.out.empty()) {
      PrepareDir(opt.out);
      nlohmann::json j;
      j["config_hash"] = ConfigHash(sc);
      j["initial"] = nlohmann::json::parse(set.initial_cert.ToJson());
      j["final"] = nlohmann::json::parse(final_report.ToJson());
      nlohmann::json kits = nlohmann::json::array();
      for (const MpcConfig& c : set.configs) {
        kits.push_back({{"id", c.id},
                        {"dare_residual", c.kit.dare_residual},
                        {"moas_t_star", c.kit.t_star},
                        {"terminal_set_faces", c.kit.Xn.num_rows()}});
      }
      j["kits"] = kits;
      WriteFile(fs::path(opt.out) / "certificate.json", j.dump(2) + "\n");
    }
    const bool pass = dare_ok && final_report.passed();
    out << "\n" << (pass ? "CERTIFIED" : "NOT CERTIFIED") << "\n";
    return static_cast<int>(pass ? kOk : kFailure);
  });
}

}  // namespace psmpc::app
