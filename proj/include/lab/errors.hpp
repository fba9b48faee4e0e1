#pragma once

#include <stdexcept>
#include <string>

namespace lab {

// Every failure the library can raise on purpose.  Each operation documents
// which kinds it throws; anything else escaping is a bug.
enum class ErrorKind {
  InvalidMatrix,
  NotPositiveDefinite,
  NonFiniteFunction,
  InvalidDimension,
  ZeroProbability,
  InsufficientData,
  BudgetExceeded,
  SingularDesign,
  BlockSizeError,
  DegenerateDimension,
  DimensionMismatch,
  NonFiniteDerivative,
  NotConverged,
  InvalidDiscount,
  NonFiniteGradient,
  Diverged,
  UnreliableStudy,
  UnsupportedModel,
  InvalidParameter,
  InvalidObservation,
  SelfCheckFailed,
  IoError,
  UsageError,
};

const char* to_string(ErrorKind kind) noexcept;

/// Exception carrying a machine-checkable kind next to the human message.
class LabError : public std::runtime_error {
 public:
  LabError(ErrorKind kind, const std::string& message);
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

}  // namespace lab
