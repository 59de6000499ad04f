#pragma once

#include <stdexcept>
#include <string>

namespace polycomp {

// Every failure the library reports derives from Error. The CLI maps the
// concrete type onto a process exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape mismatch between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Caller asked for something the operation does not support
// (task/env mismatch, N <= k for k-NN, empty input, ...).
class UsageError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration value or unknown key.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf where finite values are required, degenerate ratios.
class NumericError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

inline void require_dims(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

}  // namespace polycomp
