#pragma once

#include <stdexcept>
#include <string>

namespace fsi {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid options or incompatible configuration (CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Unusable input data (CLI exit code 3).
class DataError : public Error {
 public:
  using Error::Error;
};

class DegenerateInputError : public DataError {
 public:
  using DataError::DataError;
};

class InsufficientSamplesError : public DataError {
 public:
  using DataError::DataError;
};

// Embedding file decoding failures. Each failure mode has its own type.
class FormatError : public DataError {
 public:
  using DataError::DataError;
};

class BadMagicError : public FormatError {
 public:
  using FormatError::FormatError;
};

class VersionMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};

class TruncatedError : public FormatError {
 public:
  using FormatError::FormatError;
};

class LabelRangeError : public FormatError {
 public:
  using FormatError::FormatError;
};

// Non-finite or exploding values during optimization (CLI exit code 4).
class NumericError : public Error {
 public:
  NumericError(const std::string& what, int iteration)
      : Error(what + " (iteration " + std::to_string(iteration) + ")"),
        iteration_(iteration) {}

  int iteration() const noexcept { return iteration_; }

 private:
  int iteration_;
};

}  // namespace fsi
