#pragma once

#include <stdexcept>
#include <string>

namespace vstar {

/// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A caller-supplied argument violates a precondition.
struct InvalidParameterError : Error {
  using Error::Error;
};

/// Not enough records to form the requested estimator.
struct InsufficientDataError : Error {
  using Error::Error;
};

/// Covariance matrix is singular below the configured eigenvalue floor.
struct SingularCovarianceError : Error {
  using Error::Error;
};

/// Linear system is numerically singular.
struct SingularSystemError : Error {
  using Error::Error;
};

/// Shapes of two operands do not agree.
struct DimensionMismatchError : Error {
  using Error::Error;
};

/// Requested a law/method/order the implementation does not provide.
struct UnsupportedError : Error {
  using Error::Error;
};

/// A combinatorial object would exceed the configured size cap.
struct CapacityError : Error {
  using Error::Error;
};

/// Iterative solver did not reach its target.
struct SolverFailureError : Error {
  using Error::Error;
};

/// Experiment configuration is malformed; message names the field path.
struct ConfigError : Error {
  using Error::Error;
};

/// Cooperative per-cell deadline expired inside a benchmark sweep.
struct CellTimeoutError : Error {
  using Error::Error;
};

}  // namespace vstar
