#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pct {

// Raised when an object is asked to reach a state its invariants forbid,
// e.g. sub-sampling that would leave a class empty.
class InvalidState : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace pct
