#include "lab/errors.hpp"

namespace lab {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidMatrix: return "InvalidMatrix";
    case ErrorKind::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorKind::NonFiniteFunction: return "NonFiniteFunction";
    case ErrorKind::InvalidDimension: return "InvalidDimension";
    case ErrorKind::ZeroProbability: return "ZeroProbability";
    case ErrorKind::InsufficientData: return "InsufficientData";
    case ErrorKind::BudgetExceeded: return "BudgetExceeded";
    case ErrorKind::SingularDesign: return "SingularDesign";
    case ErrorKind::BlockSizeError: return "BlockSizeError";
    case ErrorKind::DegenerateDimension: return "DegenerateDimension";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::NonFiniteDerivative: return "NonFiniteDerivative";
    case ErrorKind::NotConverged: return "NotConverged";
    case ErrorKind::InvalidDiscount: return "InvalidDiscount";
    case ErrorKind::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorKind::Diverged: return "Diverged";
    case ErrorKind::UnreliableStudy: return "UnreliableStudy";
    case ErrorKind::UnsupportedModel: return "UnsupportedModel";
    case ErrorKind::InvalidParameter: return "InvalidParameter";
    case ErrorKind::InvalidObservation: return "InvalidObservation";
    case ErrorKind::SelfCheckFailed: return "SelfCheckFailed";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::UsageError: return "UsageError";
  }
  return "Unknown";
}

LabError::LabError(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

void fail(ErrorKind kind, const std::string& message) { throw LabError(kind, message); }

}  // namespace lab
