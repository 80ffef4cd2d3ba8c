#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace otdistill {

// Base for all library errors. UsageError covers contract/configuration
// violations (CLI exit code 1), NumericError covers bad values produced or
// encountered at runtime (CLI exit code 2).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public UsageError {
 public:
  using UsageError::UsageError;
};

class ShapeMismatch : public UsageError {
 public:
  using UsageError::UsageError;
};

class NotSquare : public UsageError {
 public:
  using UsageError::UsageError;
};

class AlphaOutOfRange : public UsageError {
 public:
  explicit AlphaOutOfRange(double alpha)
      : UsageError("alpha must lie in [0, 1], got " + std::to_string(alpha)) {}
};

class DegenerateRow : public UsageError {
 public:
  using UsageError::UsageError;
};

class MethodUnknown : public UsageError {
 public:
  explicit MethodUnknown(const std::string& name)
      : UsageError("unknown method '" + name + "'") {}
};

class StepOutOfRange : public UsageError {
 public:
  using UsageError::UsageError;
};

class EmptyDataset : public UsageError {
 public:
  using UsageError::UsageError;
};

class ConfigInvalid : public UsageError {
 public:
  using UsageError::UsageError;
};

class FormatError : public UsageError {
 public:
  using UsageError::UsageError;
};

class KTooLarge : public UsageError {
 public:
  using UsageError::UsageError;
};

class EmptyLabelSet : public UsageError {
 public:
  explicit EmptyLabelSet(std::size_t index)
      : UsageError("true-label set at index " + std::to_string(index) + " is empty"),
        index(index) {}
  std::size_t index;
};

class NoEligiblePairs : public UsageError {
 public:
  using UsageError::UsageError;
};

class EmptyQuery : public UsageError {
 public:
  explicit EmptyQuery(std::size_t index)
      : UsageError("query " + std::to_string(index) + " has an empty attribute set"),
        index(index) {}
  std::size_t index;
};

class ZeroRowNorm : public NumericError {
 public:
  explicit ZeroRowNorm(std::size_t row)
      : NumericError("row " + std::to_string(row) + " has (near-)zero norm"), row(row) {}
  std::size_t row;
};

class NonFinite : public NumericError {
 public:
  using NumericError::NumericError;
};

class NonFiniteLoss : public NumericError {
 public:
  using NumericError::NumericError;
};

class NonFiniteValue : public NumericError {
 public:
  explicit NonFiniteValue(std::size_t flat_index)
      : NumericError("non-finite value at flat index " + std::to_string(flat_index)),
        flat_index(flat_index) {}
  std::size_t flat_index;
};

}  // namespace otdistill
