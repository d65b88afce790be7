#pragma once

#include <stdexcept>
#include <string>

namespace fedsim {

/// Base class for every error raised by the simulator.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Inconsistent dimensions, out-of-range settings, infeasible partitions.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Caller supplied an unusable value (e.g. an empty batch).
class InvalidInputError : public Error {
 public:
  using Error::Error;
};

/// Inputs that make a weighting rule undefined (all-zero counts and the like).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

/// Mismatch between the set of client updates and the set of weights.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf produced during training or aggregation.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Config validation failure tied to a key path such as "partition.alpha".
class ValidationError : public ConfigError {
 public:
  ValidationError(std::string key, const std::string& message)
      : ConfigError(key + ": " + message), key_(std::move(key)) {}

  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

}  // namespace fedsim
