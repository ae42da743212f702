#pragma once

#include <stdexcept>
#include <string>

namespace stimpute {

// Error taxonomy shared across the library; the CLI maps each class to an
// exit code (invalid input/config -> 2, numerical abort -> 3).
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor shapes disagree with an operation's contract.
struct DimensionError : Error {
    using Error::Error;
};

// A scalar argument is out of range (negative dilation, bad axis, ...).
struct ArgumentError : Error {
    using Error::Error;
};

// Model / run configuration violates an invariant.
struct ConfigError : Error {
    using Error::Error;
};

// Malformed external input (CSV, JSON, checkpoint).
struct FormatError : Error {
    using Error::Error;
};

// Non-finite values where finite ones are required (training abort).
struct NumericalError : Error {
    using Error::Error;
};

}  // namespace stimpute
