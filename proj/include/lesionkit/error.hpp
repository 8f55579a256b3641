#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lesionkit {

// Rejected input values: broken invariants, out-of-range parameters.
// The CLI maps this to exit code 2.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Unreadable or malformed files. Carries the offending location when known.
// The CLI maps this to exit code 2.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::string file, std::size_t line, const std::string& what)
      : std::runtime_error(file + ":" + std::to_string(line) + ": " + what),
        file_(std::move(file)),
        line_(line) {}
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}

  const std::string& file() const noexcept { return file_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string file_;
  std::size_t line_ = 0;
};

// Well-formed inputs on which the requested metric is undefined
// (e.g. sensitivity with zero annotations). The CLI maps this to exit code 1.
class EvalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace lesionkit
