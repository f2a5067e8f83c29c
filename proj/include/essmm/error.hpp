#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace essmm {

enum class ErrorKind {
  InvalidArgument,
  OutOfRange,
  ShapeMismatch,
  BudgetExceeded,
  Parse,
  Io,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid argument";
    case ErrorKind::OutOfRange: return "out of range";
    case ErrorKind::ShapeMismatch: return "shape mismatch";
    case ErrorKind::BudgetExceeded: return "budget exceeded";
    case ErrorKind::Parse: return "parse error";
    case ErrorKind::Io: return "i/o error";
  }
  return "error";
}

// Every failure in the library surfaces as an Error; kind() lets callers
// (and tests) branch without matching message text.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ParseError : public Error {
 public:
  ParseError(std::string source, std::size_t line, const std::string& what)
      : Error(ErrorKind::Parse, source + ":" + std::to_string(line) + ": " + what),
        source_(std::move(source)),
        line_(line) {}

  const std::string& source() const noexcept { return source_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string source_;
  std::size_t line_;
};

}  // namespace essmm
