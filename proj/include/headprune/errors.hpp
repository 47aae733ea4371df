#pragma once

#include <stdexcept>
#include <string>

namespace headprune {

// Base of every error thrown by the library. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not fit the operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Caller-supplied data is out of range (token index, probability vector, ...).
class InputError : public Error {
 public:
  using Error::Error;
};

// Operation is not valid in the current model / mask state.
class StateError : public Error {
 public:
  using Error::Error;
};

// A head or parameter coordinate does not address anything live.
class LookupError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf appeared where finite values are required.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Malformed checkpoint, config or CSV.
class ParseError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace headprune
