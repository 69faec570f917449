#pragma once

#include <stdexcept>
#include <string>

namespace smr {

inline constexpr int kConfigExit = 2;
inline constexpr int kDataExit = 3;
inline constexpr int kNumericExit = 4;

/// Bad user input: malformed config, invalid parameter combination.
/// CLI exit code 2.
class ConfigError : public std::runtime_error {
  public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Bad data: unreadable/inconsistent files, shape or frequency mismatches.
/// CLI exit code 3.
class DataError : public std::runtime_error {
  public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Numerical failure: solver divergence, non-finite values where finiteness
/// is an invariant. CLI exit code 4.
class NumericError : public std::runtime_error {
  public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace smr
