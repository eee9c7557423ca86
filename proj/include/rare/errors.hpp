#pragma once

#include <stdexcept>
#include <string>

namespace rare {

/// Base class for all library errors. `exit_code()` is the process exit
/// status the CLI maps the error to.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const { return 1; }
};

/// Malformed or inconsistent configuration input (exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 2; }
};

/// Numerical failure: factorization breakdown, non-convergence,
/// non-finite values (exit code 3).
class NumericError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 3; }
};

/// Violated operation precondition, e.g. requesting a fixed point for a
/// non-detectable subset (exit code 4).
class PreconditionError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 4; }
};

}  // namespace rare
