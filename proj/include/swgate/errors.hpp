#pragma once

#include <stdexcept>
#include <string>

namespace swgate {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Configuration that makes an inversion undefined (e.g. cos(beta) = 0).
class SingularError : public Error {
 public:
  using Error::Error;
};

// Thermal sum truncated before the probability mass converged.
class TruncationError : public Error {
 public:
  using Error::Error;
};

// Physical model cannot be evaluated (negative kappa^2, bad scan spec).
class ModelError : public Error {
 public:
  using Error::Error;
};

// Malformed or incomplete configuration. key() names the offending entry.
class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& what)
      : Error(what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

// File could not be read, written or parsed.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace swgate
