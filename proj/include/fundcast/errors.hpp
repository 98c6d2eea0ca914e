#pragma once

#include <stdexcept>
#include <string>

namespace fundcast {

// Caller-facing error taxonomy. The CLI maps UsageError-family exceptions to
// exit code 2 (bad invocation / bad inputs) and everything else to 1.

struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

struct EncodingError : UsageError {
  explicit EncodingError(const std::string& msg) : UsageError(msg) {}
};

struct ValidationError : UsageError {
  explicit ValidationError(const std::string& msg) : UsageError(msg) {}
};

struct ParseError : UsageError {
  explicit ParseError(const std::string& msg) : UsageError(msg) {}
};

struct ConfigError : UsageError {
  explicit ConfigError(const std::string& msg) : UsageError(msg) {}
};

struct DegenerateError : UsageError {
  explicit DegenerateError(const std::string& msg) : UsageError(msg) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

struct TrainingError : std::runtime_error {
  explicit TrainingError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace fundcast
