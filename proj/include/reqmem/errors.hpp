#pragma once

#include <stdexcept>
#include <string>

namespace reqmem {

/// A function argument violated its documented precondition.
class InvalidParameter : public std::invalid_argument {
public:
  explicit InvalidParameter(const std::string& what) : std::invalid_argument(what) {}
};

/// A configuration is inconsistent (grid too coarse, window too short, bad schema, ...).
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// A numerical procedure failed (step-size violation, singular system, ...).
class NumericError : public std::runtime_error {
public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace reqmem
