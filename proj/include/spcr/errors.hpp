#ifndef SPCR_ERRORS_HPP
#define SPCR_ERRORS_HPP

#include <stdexcept>

namespace spcr {

/// Numerical failure inside an algorithm (bracket loss, non-finite values, ...).
/// CLI exit code 4.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Optimization produced no usable result; message carries per-start diagnostics.
struct OptimFailure : NumericalError {
  using NumericalError::NumericalError;
};

/// Singular or rank-deficient linear system (e.g. the constrained spline solve).
struct IllPosedError : NumericalError {
  using NumericalError::NumericalError;
};

/// Invalid run configuration. CLI exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Invalid or unusable input data. CLI exit code 3.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace spcr

#endif
