#pragma once

#include <stdexcept>
#include <string>

namespace compose3d {

/// Invalid user-supplied configuration. `field` names the offending key.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::runtime_error(field.empty() ? message : field + ": " + message),
        field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Operands whose shapes do not agree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A denoiser was asked about a condition it has no registration for.
class ConditionNotFound : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Step index, label or similar outside its valid range.
class RangeError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Failure while reading or writing files.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values appeared during optimization.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace compose3d
