#pragma once

#include <stdexcept>
#include <string>

namespace congrad {

// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad argument values: shape mismatches, out-of-vocab tokens, empty inputs.
class InvalidInputError : public Error {
    using Error::Error;
};

// Requested factorization rank exceeds the matrix dimensions.
class InvalidRankError : public Error {
    using Error::Error;
};

// A gradient containing NaN/Inf was rejected; state is left unchanged.
class NonFiniteError : public Error {
    using Error::Error;
};

// Snapshot requested from a store that has never been updated.
class EmptyStoreError : public Error {
    using Error::Error;
};

// Every language produced zero usable preference pairs in a round.
class EmptyDataError : public Error {
    using Error::Error;
};

// Config or CLI validation failure (CLI exit code 1).
class ValidationError : public Error {
    using Error::Error;
};

// File and serialization failures (CLI exit code 2).
class IoError : public Error {
    using Error::Error;
};

}  // namespace congrad
