#pragma once

#include <cstddef>
#include <cstdio>
#include <stdexcept>
#include <string>

namespace vaoi {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An argument violates a documented precondition.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// An enumeration (joint channel states, MDP states) would exceed its cap.
class SizeError : public Error {
 public:
  using Error::Error;
};

/// An iterative method hit its iteration cap or diverged.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : Error(what + " (residual " + format(residual) + ")"), residual_(residual) {}

  double residual() const noexcept { return residual_; }

 private:
  static std::string format(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
  }

  double residual_;
};

/// Malformed configuration or policy file.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace vaoi
