#pragma once

#include <stdexcept>
#include <string>

namespace relex {

// Base of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input file is missing, malformed, or violates a format invariant.
class DatasetError : public Error {
public:
    using Error::Error;
};

// Text produced by a model (or a user) does not follow the expected grammar.
class ParseError : public Error {
public:
    ParseError(const std::string& message, std::string offending_line)
        : Error(message), line_(std::move(offending_line)) {}

    const std::string& line() const noexcept { return line_; }

private:
    std::string line_;
};

// Network-level failure talking to a completion service; retryable.
class TransportError : public Error {
public:
    using Error::Error;
};

// Scripted backend received a prompt no rule matches.
class ScriptMissError : public Error {
public:
    using Error::Error;
};

// Invalid run configuration; surfaces as a usage error on the command line.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Operation called with arguments outside its contract.
class PreconditionError : public Error {
public:
    using Error::Error;
};

}  // namespace relex
