#pragma once

#include <stdexcept>
#include <string>

namespace stable_cir {

// Root of every error raised by the library. The harness maps the two
// families (config vs numerical) onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad inputs: parameters outside their admissible set, malformed config.
class DomainError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Everything below signals a numerical failure.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class QuadratureError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

// The stable density dropped under the left-tail floor at the evaluation point.
class TailUnderflowError : public NumericalError {
 public:
  TailUnderflowError(const std::string& what, double x) : NumericalError(what), x_(x) {}
  double x() const noexcept { return x_; }

 private:
  double x_;
};

class OverflowError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class DegeneratePathError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class ConvergenceError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class SingularMatrixError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace stable_cir
