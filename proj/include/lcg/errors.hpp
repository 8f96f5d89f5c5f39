#pragma once

#include <stdexcept>
#include <string>

namespace lcg {

// Error taxonomy shared by every module. All of these derive from
// std::runtime_error so callers that don't care about the class can
// still catch and report.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed or mismatched structure: wrong buffer size, wrong vector
// dimension, bad file layout.
struct ShapeError : Error {
  using Error::Error;
};

// A value precondition does not hold (negative cutoff, n = 0, pose
// inside an obstacle, ...).
struct DomainError : Error {
  using Error::Error;
};

// Non-finite data where finite data is required.
struct NumericError : Error {
  using Error::Error;
};

// Graph enhancement outside the allowed scope.
struct ScopeError : Error {
  using Error::Error;
};

// Unknown node id or missing entity.
struct LookupError : Error {
  using Error::Error;
};

// Bad configuration or unparseable input file.
struct ConfigError : Error {
  using Error::Error;
};

}  // namespace lcg
