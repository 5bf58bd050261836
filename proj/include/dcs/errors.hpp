#pragma once

#include <stdexcept>
#include <string>

namespace dcs {

/// Base class for every failure raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid argument or inconsistent configuration (bad index, size mismatch...).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Simplified Newton iteration failed to converge repeatedly.
class NewtonDivergence : public Error {
public:
    using Error::Error;
};

/// Adaptive step size fell below the representable minimum.
class StepUnderflow : public Error {
public:
    using Error::Error;
};

/// An internal integrator exceeded its configured step budget.
class StepLimitExceeded : public Error {
public:
    using Error::Error;
};

/// The contraction estimate is undefined because the previous error is at
/// round-off level: iterating further cannot improve the solution.
class DegenerateEstimate : public Error {
public:
    using Error::Error;
};

/// sigma_k * dt^k >= 1: the step lies outside the contraction radius.
class EstimatorBlowup : public Error {
public:
    using Error::Error;
};

/// Predictive restart was requested without a previous accepted step.
class MissingHistory : public Error {
public:
    using Error::Error;
};

/// Malformed input file (CSV, binary dump, key=value config).
class FormatError : public Error {
public:
    using Error::Error;
};

namespace detail {

inline void require(bool cond, const std::string& what)
{
    if (!cond) throw InvalidArgument(what);
}

} // namespace detail
} // namespace dcs
