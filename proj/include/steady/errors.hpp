#pragma once

#include <stdexcept>
#include <string>

namespace steady {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mismatched shapes between operands (matrix dims, drive counts, layouts).
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// An argument violates a documented precondition (range, symmetry, sign).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Eigensolver failure, non-finite cost, or a diverging integrator.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Explicit integrator produced a non-finite state; usually the step is too large.
class IntegrationError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Malformed or unsupported configuration / dataset file.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace steady
