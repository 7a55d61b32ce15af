#pragma once

#include <stdexcept>
#include <string>

namespace fdnn {

// Exit-code class an error maps to at the CLI boundary.
enum class ErrorClass { Config = 2, Io = 3, Numeric = 4 };

class Error : public std::runtime_error {
public:
    Error(ErrorClass cls, const std::string& msg) : std::runtime_error(msg), cls_(cls) {}
    ErrorClass error_class() const { return cls_; }

private:
    ErrorClass cls_;
};

// Bad user-supplied values, invalid geometry, mismatched shapes.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(ErrorClass::Config, msg) {}
};

class ShapeError : public ConfigError {
public:
    explicit ShapeError(const std::string& msg) : ConfigError(msg) {}
};

// File-system and file-format failures (bad magic, truncation, ...).
class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error(ErrorClass::Io, msg) {}
};

// Mathematical domain violations and non-finite values.
class NumericError : public Error {
public:
    explicit NumericError(const std::string& msg) : Error(ErrorClass::Numeric, msg) {}
};

class DomainError : public NumericError {
public:
    explicit DomainError(const std::string& msg) : NumericError(msg) {}
};

// API called outside its legal state (e.g. backward without a cached forward).
class StateError : public NumericError {
public:
    explicit StateError(const std::string& msg) : NumericError(msg) {}
};

}  // namespace fdnn
