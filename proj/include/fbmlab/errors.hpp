#pragma once

#include <stdexcept>
#include <string>

namespace fbmlab {

/// Invalid or inadmissible experiment configuration, including violated
/// hypothesis gates. Maps to CLI exit code 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A caller broke an operation's precondition (grid mismatch, s > t, ...).
class PreconditionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A factorization or numerical routine failed where it should not.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A path left the lattice box during an off-grid evaluation.
class BoxExitError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

inline void require(bool condition, const std::string& message) {
    if (!condition) {
        throw PreconditionError(message);
    }
}

} // namespace fbmlab
