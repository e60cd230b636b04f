#pragma once

#include <stdexcept>
#include <string>

namespace calibprobe {

/// Bad configuration: unknown keys, inconsistent shapes, invalid parameters.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// I/O and parse failures (missing files, bad magic, truncated blocks).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// Numerical degeneracy: rank-deficient systems, no RANSAC consensus,
/// unresamplable samples.
class DegeneracyError : public std::runtime_error {
 public:
  explicit DegeneracyError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace calibprobe
