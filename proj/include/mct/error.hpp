#pragma once

#include <stdexcept>
#include <string>

namespace mct {

// Base for every error raised by the library. The CLI maps the subclasses
// onto distinct exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid arguments, geometry or configuration.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// A configuration file could not be parsed; carries the offending line.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& file, int line, const std::string& what)
      : Error(file + ":" + std::to_string(line) + ": " + what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

// Numerical failure (rank-zero calibration, non-convergent quadrature).
class NumericalError : public Error {
 public:
  using Error::Error;
};

// File-format and filesystem failures.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace mct
