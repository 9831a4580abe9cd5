#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace physr {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed expression text. `offset` is the byte position where parsing stopped.
class ParseError : public Error {
public:
    ParseError(const std::string& message, std::size_t offset)
        : Error(message + " at offset " + std::to_string(offset)), offset_(offset) {}
    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

/// Identifier that is neither a declared variable nor a known operator.
class UnknownIdentifierError : public ParseError {
public:
    UnknownIdentifierError(const std::string& name, std::size_t offset)
        : ParseError("unknown identifier '" + name + "'", offset), name_(name) {}
    const std::string& name() const noexcept { return name_; }

private:
    std::string name_;
};

class UnboundVariableError : public Error {
public:
    explicit UnboundVariableError(const std::string& name)
        : Error("unbound variable '" + name + "'"), name_(name) {}
    const std::string& name() const noexcept { return name_; }

private:
    std::string name_;
};

/// Bad or inconsistent data: missing columns, malformed manifests, shape mismatches.
class DataError : public Error {
public:
    using Error::Error;
};

/// Numerical failure: diverging simulations, non-finite losses, CFL violations.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Invalid tool or CLI arguments.
class ArgumentError : public Error {
public:
    using Error::Error;
};

} // namespace physr
