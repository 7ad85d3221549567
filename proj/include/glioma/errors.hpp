#pragma once

#include <stdexcept>
#include <string>

namespace glioma {

// Failure categories map one-to-one onto CLI exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid parameters or inconsistent inputs (exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Solver breakdown, non-convergence or non-finite values (exit code 3).
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// File format or filesystem failure (exit code 4).
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace glioma
