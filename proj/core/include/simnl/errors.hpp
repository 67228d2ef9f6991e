#pragma once

#include <stdexcept>
#include <string>

namespace simnl {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad magic, version, or malformed header in an SNLE file.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Payload size does not match what the header declares.
class TruncationError : public Error {
public:
    using Error::Error;
};

/// Data violates a numeric invariant (zero-norm row, NaN, ...).
class DataError : public Error {
public:
    using Error::Error;
};

class ArgumentError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// A row collapsed to zero norm during normalization.
class NumericDomainError : public Error {
public:
    using Error::Error;
};

/// An operation was called before a required setup step (e.g. delta calibration).
class StateError : public Error {
public:
    using Error::Error;
};

class CalibrationError : public Error {
public:
    using Error::Error;
};

/// Training produced a non-finite loss.
class TrainingError : public Error {
public:
    using Error::Error;
};

}  // namespace simnl
