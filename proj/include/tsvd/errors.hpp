#pragma once

#include <stdexcept>
#include <string>

namespace tsvd {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A caller broke an operation's precondition (dimension mismatch, bad root, ...).
class ContractError : public Error {
public:
    using Error::Error;
};

/// The matrix shape is outside what the library supports (it is tall/skinny only).
class ShapeError : public Error {
public:
    using Error::Error;
};

class ParameterError : public Error {
public:
    using Error::Error;
};

/// An iterative kernel hit its sweep cap. Carries the residual it stopped at.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double residual) : Error(what), residual_(residual) {}

    [[nodiscard]] double residual() const noexcept { return residual_; }

private:
    double residual_;
};

/// A collective failed on some rank; raised on every participating rank.
class CollectiveError : public Error {
public:
    using Error::Error;
};

/// The random projection lost rank; retrying with another seed usually helps.
class DegenerateProjectionError : public Error {
public:
    using Error::Error;
};

/// Malformed or unreadable matrix file.
class FormatError : public Error {
public:
    using Error::Error;
};

} // namespace tsvd
