#pragma once

#include <stdexcept>
#include <string>

namespace flatd2 {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Evaluation outside the real domain of an operation (1/0, asin(2), ln(-1)).
class DomainError : public Error {
public:
    using Error::Error;
};

/// No admissible sample point could be drawn within the sampling budget.
class SamplingError : public Error {
public:
    using Error::Error;
};

/// A rank decision disagreed across too many sample points.
class RankInstability : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    ParseError(const std::string& msg, int line, int column)
        : Error(std::to_string(line) + ":" + std::to_string(column) + ": " + msg),
          line_(line), column_(column) {}
    int line() const { return line_; }
    int column() const { return column_; }

private:
    int line_;
    int column_;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

class LiftError : public Error {
public:
    using Error::Error;
};

class NoSolutionError : public Error {
public:
    using Error::Error;
};

class InversionError : public Error {
public:
    using Error::Error;
};

class NotAffineError : public Error {
public:
    using Error::Error;
};

class AffinityError : public Error {
public:
    using Error::Error;
};

/// Raised when the ansatz search cannot produce the requested first integrals.
class StraightenError : public Error {
public:
    StraightenError(const std::string& msg, std::string hint_request = {})
        : Error(msg), hint_request_(std::move(hint_request)) {}
    /// Annihilation conditions in hint-file syntax, for solving externally.
    const std::string& hint_request() const { return hint_request_; }

private:
    std::string hint_request_;
};

class RedundantInputError : public Error {
public:
    using Error::Error;
};

class ClosureError : public Error {
public:
    using Error::Error;
};

class OrderExceeded : public Error {
public:
    using Error::Error;
};

class PreconditionError : public Error {
public:
    using Error::Error;
};

}  // namespace flatd2
