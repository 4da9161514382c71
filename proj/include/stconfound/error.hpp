#pragma once

#include <stdexcept>
#include <string>

namespace stconfound {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad input: malformed graphs, inconsistent dimensions, collinear designs,
/// missing configuration.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// A linear-algebra step failed (singular system, indefinite matrix,
/// ill-posed constraints, overflow that step-halving could not repair).
class NumericalError : public Error {
public:
    using Error::Error;
};

/// File system or parse failures.
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace stconfound
