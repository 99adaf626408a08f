#pragma once

#include <stdexcept>
#include <string>

namespace qbnn {

// Error taxonomy shared by the library and the CLI exit-code mapping.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor dimensions do not compose (matmul inner dims, kernel larger than input, ...).
struct ShapeError : Error {
    using Error::Error;
};

// An argument value is outside the operation's domain (bad fault label,
// alpha >= beta, empty input where at least one element is required, ...).
struct DomainError : Error {
    using Error::Error;
};

// A run configuration is inconsistent (unsupported bit width, missing quant
// spec for a site, split rules violated, ...). Raised before side effects.
struct ConfigError : Error {
    using Error::Error;
};

// Training or evaluation produced a non-finite value.
struct NumericError : Error {
    using Error::Error;
};

// File read/write failure.
struct IoError : Error {
    using Error::Error;
};

// Bad command line (unknown command, unknown flag).
struct UsageError : Error {
    using Error::Error;
};

} // namespace qbnn
