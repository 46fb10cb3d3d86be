#pragma once

#include <stdexcept>
#include <string>

namespace maat {

// Base of every error raised by the library. Subclasses name the failure
// family so callers (the CLI in particular) can map them to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

// A caller broke a documented precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

class DegenerateRowError : public ContractError {
 public:
  using ContractError::ContractError;
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class EmptyDatasetError : public FormatError {
 public:
  using FormatError::FormatError;
};

class SpecError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Raised when a value goes NaN/Inf or a loss stops being finite.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace maat
