#pragma once

#include <stdexcept>
#include <string>

namespace regdif {

/// Raised when a computation produces non-finite values, fails to converge
/// where convergence is required, or meets a singular matrix.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Efficient or observed information too ill-conditioned to invert.
class SingularInformationError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace regdif
