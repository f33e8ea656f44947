#pragma once

#include <stdexcept>
#include <string>

namespace imps {

/// Axis/extent mismatch between tensors or operators.
struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Input that is valid in shape but degenerate in content (zero norm, ...).
struct DegenerateInputError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Violated mathematical precondition (asymmetric input to a symmetric
/// factorization, non-isometric embedding, ...).
struct PreconditionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// A numerical routine failed to converge or produced non-finite values.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Fitting failed or exceeded the configured error ceiling.
struct FitError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Malformed file content (config, checkpoint).
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace imps
