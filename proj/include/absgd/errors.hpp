#pragma once

#include <stdexcept>
#include <string>

namespace absgd {

// Invalid argument / malformed configuration. CLI exit code 1.
struct ValidationError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Overflow, non-finite values, failed numeric contracts. CLI exit code 2.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// File system and parse failures. CLI exit code 3.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParseError : IoError {
  ParseError(const std::string& msg, long line)
      : IoError(msg + " (line " + std::to_string(line) + ")"), line_number(line) {}
  long line_number;
};

}  // namespace absgd
