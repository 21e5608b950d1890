#pragma once

#include <stdexcept>
#include <string>

namespace immunokit {

// Bad input: malformed files, out-of-range arguments, violated invariants.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A computation produced NaN/Inf or otherwise had to abort.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Array shapes disagree with a layer or operation contract.
class ShapeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

}  // namespace immunokit
