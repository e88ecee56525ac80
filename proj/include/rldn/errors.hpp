#pragma once

#include <stdexcept>
#include <string>

namespace rldn {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible with the requested operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A scalar argument is outside its valid range.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf appeared where finite values are required. Updates that raise
/// this leave their target untouched.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// An API was called in a state where it is not allowed.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Malformed file, manifest or config.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A statistical test does not have enough usable samples.
class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

}  // namespace rldn
