#pragma once

#include <stdexcept>
#include <string>

namespace ergolab {

/// Base of every library error.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A point or region does not belong to the phase domain of a system.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Invalid parameters or configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// The requested operation does not apply to the given system.
class UnsupportedSystem : public Error {
public:
    using Error::Error;
};

/// An iterative solver stopped before reaching its tolerance.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double residual)
        : Error(what), residual_(residual) {}
    double residual() const { return residual_; }

private:
    double residual_;
};

/// Mass left the phase domain (orbit escape or sink mass above threshold).
class EscapeError : public Error {
public:
    EscapeError(const std::string& what, double fraction)
        : Error(what), fraction_(fraction) {}
    double fraction() const { return fraction_; }

private:
    double fraction_;
};

}  // namespace ergolab
