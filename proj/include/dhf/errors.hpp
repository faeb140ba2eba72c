#pragma once

#include <stdexcept>
#include <string>

namespace dhf {

/// Malformed or inconsistent input: bad files, unknown ids, shape mismatches.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A computation could not proceed: non-PSD covariance, singular system.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dhf
