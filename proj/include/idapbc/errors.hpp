#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace idapbc {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t position)
      : Error(what + " at position " + std::to_string(position)), position_(position) {}
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

/// Raised by expression evaluation (division by zero, 0 to a negative power).
class EvalError : public Error {
 public:
  using Error::Error;
};

/// A matrix required to be symmetric positive definite is not.
class NotPositiveDefinite : public Error {
 public:
  NotPositiveDefinite(const std::string& what, double min_eigenvalue)
      : Error(what + " (min eigenvalue " + std::to_string(min_eigenvalue) + ")"),
        min_eigenvalue_(min_eigenvalue) {}
  double min_eigenvalue() const { return min_eigenvalue_; }

 private:
  double min_eigenvalue_;
};

class RankDeficient : public Error {
 public:
  using Error::Error;
};

/// A tensor or model failed one of its structural invariants.
class InvariantViolation : public Error {
 public:
  InvariantViolation(const std::string& what, double residual)
      : Error(what + " (residual " + std::to_string(residual) + ")"), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace idapbc
