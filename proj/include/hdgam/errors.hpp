#pragma once

#include <stdexcept>
#include <string>

namespace hdgam {

/// A feature column cannot support the requested basis (too few distinct
/// values, or quantile knots that all coincide).
struct DegenerateFeature : std::runtime_error {
  explicit DegenerateFeature(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid configuration: mismatched dimensions, bad flags, unusable options.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed input data or a response outside the family support.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// The solver produced a non-finite objective.
struct SolverDiverged : std::runtime_error {
  explicit SolverDiverged(const std::string& what) : std::runtime_error(what) {}
};

/// Model file written by an incompatible format version.
struct VersionError : ConfigError {
  explicit VersionError(const std::string& what) : ConfigError(what) {}
};

}  // namespace hdgam
