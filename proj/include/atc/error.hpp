#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace atc {

/// Base class of all recoverable library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad configuration: unknown format, malformed flag value, unreadable config file.
class UsageError : public Error {
public:
    using Error::Error;
};

/// The input data cannot support the requested computation.
class DataError : public Error {
public:
    using Error::Error;
};

/// Malformed input record. Carries the 1-based line number and field name.
class ParseError : public DataError {
public:
    ParseError(std::size_t line, std::string field, const std::string& what)
        : DataError("line " + std::to_string(line) + ", field " + field + ": " + what),
          line_(line), field_(std::move(field)) {}

    std::size_t line() const noexcept { return line_; }
    const std::string& field() const noexcept { return field_; }

private:
    std::size_t line_;
    std::string field_;
};

/// Non-finite values appeared during optimization.
class NumericalError : public Error {
public:
    using Error::Error;
};

}  // namespace atc
