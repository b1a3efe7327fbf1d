#pragma once

#include <stdexcept>
#include <string>

namespace btpriv {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed textual input (identifiers, table files, trace lines).
class ParseError : public Error {
public:
    using Error::Error;
};

/// A scenario or argument failed validation.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// An operation was invoked on a device in a state that forbids it.
class ProtocolError : public Error {
public:
    using Error::Error;
};

/// Piconet membership limit exceeded.
class CapacityError : public Error {
public:
    using Error::Error;
};

/// Bad query arguments (e.g. an inverted time window).
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// Evaluation was asked to score outputs against a different run's truth.
class RefusalError : public Error {
public:
    using Error::Error;
};

}  // namespace btpriv
