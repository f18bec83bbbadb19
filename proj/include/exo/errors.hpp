#pragma once

#include <stdexcept>
#include <string>

namespace exo {

// Non-finite or otherwise unusable IMU data.
class SignalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// More consecutive IMU samples missing than the stream contract tolerates.
class SignalLossError : public SignalError {
 public:
  using SignalError::SignalError;
};

class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class IdentificationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class MetricError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace exo
