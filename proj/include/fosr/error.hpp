#pragma once

#include <stdexcept>
#include <string>

namespace fosr {

// Base class for every error thrown by this library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A precondition on an argument was violated (NaN input, length mismatch, ...).
class InvalidInputError : public Error {
public:
    using Error::Error;
};

// Too few usable values to perform an estimate (e.g. a Weibull tail with
// fewer than two positive distances).
class InsufficientDataError : public Error {
public:
    using Error::Error;
};

// Data with zero variance where a spread is required (e.g. a constant tail).
class DegenerateDataError : public Error {
public:
    using Error::Error;
};

// A known class was reported by no client during calibration aggregation.
class MissingClassError : public Error {
public:
    MissingClassError(int class_id, const std::string& msg)
        : Error(msg), class_id_(class_id) {}
    int class_id() const { return class_id_; }

private:
    int class_id_;
};

// Malformed message or mismatched model shapes on the federation side.
class ProtocolError : public Error {
public:
    using Error::Error;
};

// A blocking receive ran out of time; aborts the current round/exchange.
class TimeoutError : public Error {
public:
    using Error::Error;
};

// Text input (data file or config) could not be parsed. Carries the
// 1-based line number when one applies, 0 otherwise.
class ParseError : public Error {
public:
    explicit ParseError(const std::string& msg, int line = 0)
        : Error(msg), line_(line) {}
    int line() const { return line_; }

private:
    int line_;
};

// Cross-field validation of an experiment configuration failed.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Dataset rejection sampling could not satisfy the separation constraint.
class InfeasibleSpecError : public Error {
public:
    using Error::Error;
};

} // namespace fosr
