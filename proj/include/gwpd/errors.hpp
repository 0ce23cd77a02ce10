#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gwpd {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A wavepacket state violates one of its invariants (symmetry, positive-definite width, ...).
class InvalidState : public Error {
public:
    using Error::Error;
};

/// A method-level constraint is violated, e.g. a frozen Gaussian with a chirped width.
class ConstraintError : public Error {
public:
    using Error::Error;
};

/// The kinetic sub-flow would leave the continuous branch of ln det; the step is too large.
class BranchError : public Error {
public:
    using Error::Error;
};

/// Requested derivative order / quadrature setting is not available.
class UnsupportedError : public Error {
public:
    using Error::Error;
};

/// Invalid run configuration (CLI exit code 2).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Numerical failure during a propagation, carrying the step at which it happened (CLI exit code 3).
class NumericalFailure : public Error {
public:
    NumericalFailure(const std::string& what, std::size_t step)
        : Error(what + " (step " + std::to_string(step) + ")"), step_(step) {}

    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

} // namespace gwpd
