#pragma once

#include <stdexcept>
#include <string>

namespace lsps {

// Bad user input: config files, CLI flags, out-of-range indices.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Filesystem / serialization failures.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Corrupt or truncated checkpoint/archive payload.
struct ChecksumError : IoError {
    using IoError::IoError;
};

// Inputs outside an operation's documented domain (angle limits, crop cube).
struct DomainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor shape mismatch between producer and consumer.
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite values where finite ones are required.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Training loss became non-finite; carries where it happened.
struct DivergenceError : std::runtime_error {
    int phase;
    long long iteration;
    DivergenceError(int phase_, long long iteration_, const std::string& what_)
        : std::runtime_error(what_), phase(phase_), iteration(iteration_) {}
};

}  // namespace lsps
