#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sste {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument or input was violated.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Malformed text input. Carries the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// A metric is not defined on the given input (e.g. AUC on one class).
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

/// A ratio was requested with a zero denominator.
class DivisionGuardError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss or parameter.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace sste
