#pragma once

#include <stdexcept>
#include <string>

namespace sdn {

// Error categories surfaced by the CLI as machine-parsable one-liners.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParseError : IoError {
  ParseError(const std::string& msg, long line)
      : IoError(msg + " (line " + std::to_string(line) + ")"), line(line) {}
  long line;
};

struct EvalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace sdn
