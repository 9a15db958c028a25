#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace losslens {

// Base of every error the library throws. `kind()` is a stable machine tag
// used by the HTTP layer to pick a status code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "error"; }
};

class DimensionError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "dimension"; }
};

class ArgumentError : public Error {
 public:
  ArgumentError(std::string field, const std::string& what)
      : Error(field.empty() ? what : field + ": " + what), field_(std::move(field)) {}
  explicit ArgumentError(const std::string& what) : ArgumentError("", what) {}
  const char* kind() const noexcept override { return "argument"; }
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class SyntaxError : public Error {
 public:
  SyntaxError(std::size_t position, const std::string& what)
      : Error(what + " at position " + std::to_string(position)), position_(position) {}
  const char* kind() const noexcept override { return "syntax"; }
  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

// Evaluation of an expression left the real domain (log of nonpositive,
// sqrt of negative, division by zero, non-finite result).
class DomainError : public Error {
 public:
  DomainError(std::string node, const std::string& what)
      : Error(what + " in '" + node + "'"), node_(std::move(node)) {}
  const char* kind() const noexcept override { return "domain"; }
  const std::string& node() const noexcept { return node_; }

 private:
  std::string node_;
};

class CapabilityError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "capability"; }
};

class IncompatibleArchError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "incompatible_arch"; }
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, std::size_t column, const std::string& what)
      : Error("line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + what),
        line_(line),
        column_(column) {}
  const char* kind() const noexcept override { return "parse"; }
  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

class DivergenceError : public Error {
 public:
  explicit DivergenceError(std::size_t epoch)
      : Error("training diverged (non-finite loss) at epoch " + std::to_string(epoch)), epoch_(epoch) {}
  const char* kind() const noexcept override { return "divergence"; }
  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

class Cancelled : public Error {
 public:
  Cancelled() : Error("computation cancelled") {}
  const char* kind() const noexcept override { return "cancelled"; }
};

}  // namespace losslens
