#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

#include "psmpc/scenario.hpp"
#include "psmpc/simulator.hpp"

namespace psmpc::app {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kInfeasibleSwitching = 2,
  kConfigError = 3,
};

struct RunOptions {
  std::string scenario;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> controller;
  std::optional<std::string> mode;
  int threads = 0;
};

struct CompareOptions {
  std::string scenario;
  std::string out;
  std::optional<std::uint64_t> seed;
  int threads = 0;
};

struct CertifyOptions {
  std::string scenario;
  /// Report the terminal sets as synthesized, without shrinking them.
  bool no_repair = false;
  /// Optional directory for a JSON copy of the report.
  std::string out;
};

int CmdRun(const RunOptions& opt, std::ostream& out, std::ostream& err);
int CmdCompare(const CompareOptions& opt, std::ostream& out, std::ostream& err);
int CmdCertify(const CertifyOptions& opt, std::ostream& out, std::ostream& err);

/// Energy deviation, switching signal and permission traces as CSV + SVG.
/// File names start with `stem`.
void EmitPlotData(const SimLog& log, const std::string& dir, const std::string& stem);

/// Git blob hash: SHA-1 of "blob <len>\0" followed by the text.
std::string GitBlobHash(const std::string& text);

/// Git blob hash of the resolved scenario.
std::string ConfigHash(const ScenarioConfig& sc);

}  // namespace psmpc::app
