#pragma once

#include <stdexcept>
#include <string>

namespace apm {

/// Raised for malformed inputs: bad CSV rows, non-monotone dates,
/// dimension mismatches, infeasible configuration.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Raised when a numerical routine cannot produce a trustworthy result
/// (singular covariance, corrupted filter state, degenerate statistics).
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace apm
