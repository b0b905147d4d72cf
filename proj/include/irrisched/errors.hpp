/**
 * @file errors.hpp
 * @brief Exception types shared by the irrigation scheduling library
 */

#pragma once

#include <stdexcept>
#include <string>

namespace irrisched {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Newton iteration of the Richards solver did not converge.
class ConvergenceFailure : public Error {
public:
    ConvergenceFailure(const std::string& what, double residual_norm, int iterations)
        : Error(what + " (residual " + std::to_string(residual_norm) + " after " +
                std::to_string(iterations) + " iterations)"),
          residual_norm_(residual_norm),
          iterations_(iterations) {}

    double residual_norm() const noexcept { return residual_norm_; }
    int iterations() const noexcept { return iterations_; }

private:
    double residual_norm_;
    int iterations_;
};

/// Training loss of a network became NaN or infinite.
class DivergenceError : public Error {
public:
    using Error::Error;
};

/// PPO surrogate loss became NaN or infinite.
class NonFiniteLoss : public Error {
public:
    using Error::Error;
};

/// The MPC objective evaluated to NaN or infinity.
class NonFiniteObjective : public Error {
public:
    using Error::Error;
};

/// Malformed input file.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Weather series with a missing day.
class GapError : public Error {
public:
    using Error::Error;
};

}  // namespace irrisched
