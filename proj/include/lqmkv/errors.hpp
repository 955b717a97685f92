#pragma once

#include <stdexcept>
#include <string>

namespace lqmkv {

/// Malformed problem data: shape mismatches, non-increasing grids, bad dimensions.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Query outside the time span covered by a path or a solution.
struct RangeError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

/// Numerical failure inside a solver. `time` is the instant at which the
/// failure was detected (NaN when not time-localised).
struct SolverError : std::runtime_error {
  double time;
  explicit SolverError(const std::string& msg, double t = std::nan(""))
      : std::runtime_error(msg), time(t) {}
};

/// Bad run configuration or unreadable input files.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace lqmkv
