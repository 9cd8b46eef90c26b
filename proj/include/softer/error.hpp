#pragma once

#include <stdexcept>
#include <string>

namespace softer {

// Every failure raised by the library derives from Error. The CLI maps each
// subclass onto its own exit code (see exit_code()).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual int exit_code() const noexcept { return 1; }
};

// Incompatible tensor extents, dataset dimensions or index ranges.
class ShapeError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 3; }
};

// Invalid input values: NaN entries, asymmetric predictors, malformed files.
class DataError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 4; }
};

// Inadmissible hyperparameters or configuration.
class ConfigError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 5; }
};

// Non-finite quantities during sampling or density evaluation.
class NumericError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 6; }
};

// File could not be read or written, version mismatch, checksum failure.
class IoError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 7; }
};

class ChecksumError : public IoError {
public:
    using IoError::IoError;
    int exit_code() const noexcept override { return 8; }
};

} // namespace softer
