#pragma once

#include <stdexcept>
#include <string>

namespace tensorspike {

// Bad index tuple (non-increasing, repeated, or out of range).
struct IndexError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Dimension mismatch between tensors / vectors.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Malformed .tns file (magic, version, dtype, truncation).
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Allocation above the memory cap, or enumeration state space too large.
struct CapacityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite value produced by an iterative scheme.
struct DivergenceError : std::runtime_error {
    int iteration;
    DivergenceError(const std::string& msg, int iter)
        : std::runtime_error(msg), iteration(iter) {}
};

// Integrator or expectation produced a non-finite result.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Channel with zero Fisher information, or a non-normalizable tilted prior.
struct DegenerateError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bisection bracket does not straddle the predicate change.
struct BracketError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace tensorspike
