#pragma once

#include <stdexcept>
#include <string>

namespace gpk {

/// Base of every error raised by the library. `exit_code()` is what the CLI returns.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 1; }
};

/// Bad input shape: grid too coarse, missing config key, budget exceeded at setup.
class ConfigError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

/// Value outside the mathematical domain of an operation (negative potential, vacuum input, ...).
class DomainError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

/// A numerical budget was exceeded while running: truncation leakage, blow-up, stability.
class NumericalBudgetError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

/// A result violates an invariant the library guarantees.
class InvariantViolation : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 4; }
};

}  // namespace gpk
