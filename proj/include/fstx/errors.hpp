#pragma once

#include <stdexcept>
#include <string>

namespace fstx {

// Root of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

class PartitionError : public Error {
 public:
  using Error::Error;
};

class CapacityError : public Error {
 public:
  using Error::Error;
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class CompositionError : public Error {
 public:
  using Error::Error;
};

class StateError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

class ProtocolError : public Error {
 public:
  using Error::Error;
};

// Unreadable or mismatched checkpoint files.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Raised when a coalition cannot be scored. Carries the offending mask as a
/// 0/1 string so callers can log or retry it.
class EvaluationError : public Error {
 public:
  EvaluationError(const std::string& what, std::string mask_bits = {})
      : Error(what), mask_bits_(std::move(mask_bits)) {}

  const std::string& mask_bits() const noexcept { return mask_bits_; }

 private:
  std::string mask_bits_;
};

}  // namespace fstx
