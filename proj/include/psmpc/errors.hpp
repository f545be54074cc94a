#pragma once

#include <stdexcept>
#include <string>

namespace psmpc {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or non-finite model data, or mismatched dimensions.
class InvalidModel : public Error {
 public:
  using Error::Error;
};

/// Ill-posed set description (e.g. a box with lower >= upper).
class InvalidSet : public Error {
 public:
  using Error::Error;
};

class EmptySet : public Error {
 public:
  using Error::Error;
};

class Unbounded : public Error {
 public:
  using Error::Error;
};

/// The Riccati recursion failed to converge or R + B'PB was singular.
class NotStabilizable : public Error {
 public:
  using Error::Error;
};

/// The output admissible set iteration exceeded its step budget.
class NotFinitelyDetermined : public Error {
 public:
  using Error::Error;
};

/// A composed (leader/restrictor) OCP turned out infeasible. Under the
/// cross-invariance assumption on the terminal sets this must never happen,
/// so it is surfaced as a hard error rather than handled.
class RecursiveFeasibilityViolation : public Error {
 public:
  using Error::Error;
};

/// A nominal single-controller OCP was infeasible.
class OcpInfeasible : public Error {
 public:
  using Error::Error;
};

/// Scenario file or command-line configuration problem.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace psmpc
