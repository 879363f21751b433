#pragma once

#include <stdexcept>

namespace transface {

/// Raised when operand shapes are incompatible with an operation.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a precondition on values (not shapes) is violated.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Unreadable or malformed input files.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A non-finite value appeared during training.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace transface
