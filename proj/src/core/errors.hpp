#pragma once

#include <stdexcept>
#include <string>

namespace boneforge {

// Invalid input data: malformed files, broken invariants, unknown ids.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Parse failure with location information already folded into what().
class ParseError : public DataError {
 public:
  using DataError::DataError;
};

// A file could not be opened, read or written.
class IoError : public DataError {
 public:
  using DataError::DataError;
};

// Optimization diverged or produced non-finite values.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller violated a documented precondition (bad counts, bad config).
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace boneforge
