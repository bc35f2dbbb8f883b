#pragma once

#include <stdexcept>
#include <string>

namespace flare {

// Base class for all library errors.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// File or stream level failure (missing path, decode error, write failure).
struct IoError : Error {
  explicit IoError(const std::string& msg) : Error(msg) {}
};

// Invalid configuration supplied by the caller (bad flag combination,
// out-of-range setting, malformed config file).
struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// An operation was called outside its contract (wrong colour space,
// mismatched dimensions, out-of-bounds parameter).
struct ContractViolation : Error {
  explicit ContractViolation(const std::string& msg) : Error(msg) {}
};

// Numerical failure that survived all recovery attempts.
struct NumericError : Error {
  explicit NumericError(const std::string& msg) : Error(msg) {}
};

}  // namespace flare
