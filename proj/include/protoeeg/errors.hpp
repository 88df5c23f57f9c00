#pragma once

#include <stdexcept>
#include <string>

namespace protoeeg {

// Base of every error thrown by the library. The CLI maps subclasses onto
// exit codes, so new error kinds should derive from one of the groups below.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Usage / configuration group.
class ConfigError : public Error {
 public:
  using Error::Error;
};
class ContractError : public Error {
 public:
  using Error::Error;
};
class DimensionError : public ContractError {
 public:
  using ContractError::ContractError;
};
class IndexError : public ContractError {
 public:
  using ContractError::ContractError;
};

// Data / format group.
class FormatError : public Error {
 public:
  using Error::Error;
};
class ReferenceError : public Error {
 public:
  using Error::Error;
};
class ProvenanceError : public Error {
 public:
  using Error::Error;
};

// Numeric group.
class NumericError : public Error {
 public:
  using Error::Error;
};
class DegenerateInputError : public NumericError {
 public:
  using NumericError::NumericError;
};
class UndefinedMetricError : public NumericError {
 public:
  using NumericError::NumericError;
};

}  // namespace protoeeg
