#pragma once

#include <stdexcept>
#include <string>

namespace lazydit {

// Base for every error raised by the library. The CLI maps these to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

// Power iteration ran out of iterations; carries the last estimate.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double last_estimate)
      : Error(what), last_estimate_(last_estimate) {}
  double last_estimate() const noexcept { return last_estimate_; }

 private:
  double last_estimate_;
};

// Attention logit above the configured cap.
class OverflowError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ChecksumError : public Error {
 public:
  using Error::Error;
};

class VersionError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace lazydit
