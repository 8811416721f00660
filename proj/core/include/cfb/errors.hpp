#pragma once

#include <stdexcept>
#include <string>

namespace cfb {

// Numerical failures map to CLI exit code 3, I/O failures to 4.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DomainError : NumericalError {
    using NumericalError::NumericalError;
};

// Level tracing found no sign change anywhere on the sampling grid.
struct EmptyLevelSetError : NumericalError {
    using NumericalError::NumericalError;
};

// Fixed-point inversion did not reach tolerance within the iteration cap.
struct NoConvergenceError : NumericalError {
    double final_residual = 0.0;
    NoConvergenceError(const std::string& msg, double residual)
        : NumericalError(msg), final_residual(residual) {}
};

// Level-set gradient too small for a curvature evaluation.
struct DegenerateGradientError : NumericalError {
    using NumericalError::NumericalError;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace cfb
