#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace fcp {

// Invalid configuration or argument (bad penalty spec, mismatched shapes, ...).
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Mathematically undefined input (negative magnitude, non-PD precision matrix).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Operation not defined for this loss family.
class UnsupportedOperation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

class InsufficientData : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Rank deficient restricted design.
class SingularityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// An iterative solver ran out of budget. Carries the residual it reached and
// the number of iterations spent; the owning solver attaches the last iterate
// through `ConvergenceFailure<T>` where it is useful.
class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& what, double residual, long iterations)
        : std::runtime_error(what), residual_(residual), iterations_(iterations) {}

    double residual() const noexcept { return residual_; }
    long iterations() const noexcept { return iterations_; }

private:
    double residual_;
    long iterations_;
};

template <class Iterate>
class ConvergenceFailure : public ConvergenceError {
public:
    ConvergenceFailure(const std::string& what, double residual, long iterations, Iterate last)
        : ConvergenceError(what, residual, iterations), last_(std::move(last)) {}

    const Iterate& last_iterate() const noexcept { return last_; }

private:
    Iterate last_;
};

}  // namespace fcp
