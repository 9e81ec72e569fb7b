#pragma once

#include <stdexcept>
#include <string>

namespace jetmech {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An exact rational operation left the representable range.
class OverflowError : public Error {
public:
    using Error::Error;
};

/// A precondition on an argument was violated (wrong symbol kind, bad size, ...).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Numeric evaluation met a symbol with no value.
class UnboundSymbol : public Error {
public:
    using Error::Error;
};

/// The homotopy operator cannot be applied in closed form (e.g. sinusoid signals).
class DecompositionUnsupported : public Error {
public:
    using Error::Error;
};

/// The mass matrix -dR/da could not be inverted at some state.
class SingularMass : public Error {
public:
    using Error::Error;
};

/// The energy audit needs an anti-exact part without dv components.
class AuditUnsupported : public Error {
public:
    using Error::Error;
};

/// A sampled field does not live on the expected grid.
class GridMismatch : public Error {
public:
    using Error::Error;
};

}  // namespace jetmech
