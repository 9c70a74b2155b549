#pragma once

#include <stdexcept>
#include <string>

namespace accear {

/// Failure category. The CLI maps each category onto a process exit code.
enum class ErrorKind {
  parameter,  // bad configuration or argument values
  input,      // malformed or insufficient input data
  shape,      // tensor or matrix dimensions do not agree
  numeric,    // non-finite values or failed decompositions
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ParameterError : Error {
  explicit ParameterError(const std::string& what) : Error(ErrorKind::parameter, what) {}
};

struct InputError : Error {
  explicit InputError(const std::string& what) : Error(ErrorKind::input, what) {}
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& what) : Error(ErrorKind::shape, what) {}
};

struct NumericError : Error {
  explicit NumericError(const std::string& what) : Error(ErrorKind::numeric, what) {}
};

}  // namespace accear
