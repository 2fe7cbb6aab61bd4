#pragma once

#include <stdexcept>
#include <string>

namespace sdta {

/// Failure classes; the CLI maps them to exit codes (parse=2, validation=3, runtime=4).
enum class ErrorClass { Parse, Validation, Runtime };

enum class ErrorCode {
  Malformed,
  UnknownReference,
  InvariantViolation,
  NoRoute,
  UnsupportedNodeType,
  ProbabilityMass,
  MissingSeries,
  NonPositiveStep,
  InvalidZFactor,
  MonotonicityRequired,
  DegenerateChoiceSet,
  NonTerminatingTranslation,
  ShapeMismatch,
  InvalidConfig,
};

inline ErrorClass error_class(ErrorCode code) {
  switch (code) {
    case ErrorCode::Malformed:
    case ErrorCode::UnknownReference:
      return ErrorClass::Parse;
    case ErrorCode::InvariantViolation:
    case ErrorCode::NoRoute:
    case ErrorCode::UnsupportedNodeType:
    case ErrorCode::ProbabilityMass:
    case ErrorCode::MissingSeries:
    case ErrorCode::NonPositiveStep:
    case ErrorCode::InvalidZFactor:
    case ErrorCode::MonotonicityRequired:
    case ErrorCode::InvalidConfig:
      return ErrorClass::Validation;
    case ErrorCode::DegenerateChoiceSet:
    case ErrorCode::NonTerminatingTranslation:
    case ErrorCode::ShapeMismatch:
      return ErrorClass::Runtime;
  }
  return ErrorClass::Runtime;
}

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::Malformed: return "Malformed";
    case ErrorCode::UnknownReference: return "UnknownReference";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
    case ErrorCode::NoRoute: return "NoRoute";
    case ErrorCode::UnsupportedNodeType: return "UnsupportedNodeType";
    case ErrorCode::ProbabilityMass: return "ProbabilityMass";
    case ErrorCode::MissingSeries: return "MissingSeries";
    case ErrorCode::NonPositiveStep: return "NonPositiveStep";
    case ErrorCode::InvalidZFactor: return "InvalidZFactor";
    case ErrorCode::MonotonicityRequired: return "MonotonicityRequired";
    case ErrorCode::DegenerateChoiceSet: return "DegenerateChoiceSet";
    case ErrorCode::NonTerminatingTranslation: return "NonTerminatingTranslation";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  ErrorClass error_class() const noexcept { return sdta::error_class(code_); }

 private:
  ErrorCode code_;
};

}  // namespace sdta
