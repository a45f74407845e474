#pragma once

#include <stdexcept>
#include <string>

namespace sweepds {

// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A constraint, dynamics, or cost callback produced a non-finite value.
struct EvaluationError : Error {
  using Error::Error;
};

// Malformed expression string or problem file.
struct ParseError : Error {
  using Error::Error;
};

// File-level input/output problems (missing file, bad JSON, schema errors).
struct IoError : Error {
  using Error::Error;
};

// The active-set QP used for cone projections failed to converge.
struct QpError : Error {
  using Error::Error;
};

// Extended projection with empty feasible set {w in K : w - v in E}.
struct InfeasibleProjection : Error {
  using Error::Error;
};

// State left the feasible set by more than the drift tolerance.
struct StateOutsideSet : Error {
  using Error::Error;
};

// Inconsistent dimensions or missing symbolic data during MPCC assembly.
struct AssemblyError : Error {
  using Error::Error;
};

// Requested Butcher tableau is not available.
struct UnsupportedTableau : Error {
  using Error::Error;
};

// A homotopy solve failed mid-integration; carries the failing relaxation level.
struct SolveError : Error {
  double sigma = 0.0;
  SolveError(const std::string& msg, double sigma_level)
      : Error(msg), sigma(sigma_level) {}
};

}  // namespace sweepds
