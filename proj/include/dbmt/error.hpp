#pragma once

#include <stdexcept>
#include <string>

namespace dbmt {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the admissible domain (times out of range, bad sizes).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Input that violates a structural contract (dimension mismatch, bad config).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A computation produced a non-finite or degenerate value.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class SingularOperatorError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class EmbeddingError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Operation the chosen covariance backing does not support.
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

}  // namespace dbmt
