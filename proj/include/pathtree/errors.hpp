#pragma once

#include <stdexcept>
#include <string>

namespace pathtree {

enum class ErrorCode {
  ParseError,
  StructureError,
  UnknownNode,
  RootHasNoSibling,
  NotALeaf,
  ShapeMismatch,
  EmptyInput,
  ZeroVector,
  EmptyBag,
  EmptyPath,
  BadLabel,
  BadMagic,
  TruncatedFile,
  NonFinitePayload,
  ConfigError,
  LengthMismatch,
  TooFewSamples,
  DimensionMismatch,
  NonFiniteLoss,
  GradCheckFailure,
  HashMismatch,
  EmptyEval,
  NoContributingClass,
  IncompleteGrouping,
  IoError,
  UsageError,
};

inline const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::StructureError: return "StructureError";
    case ErrorCode::UnknownNode: return "UnknownNode";
    case ErrorCode::RootHasNoSibling: return "RootHasNoSibling";
    case ErrorCode::NotALeaf: return "NotALeaf";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::EmptyBag: return "EmptyBag";
    case ErrorCode::EmptyPath: return "EmptyPath";
    case ErrorCode::BadLabel: return "BadLabel";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::NonFinitePayload: return "NonFinitePayload";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::GradCheckFailure: return "GradCheckFailure";
    case ErrorCode::HashMismatch: return "HashMismatch";
    case ErrorCode::EmptyEval: return "EmptyEval";
    case ErrorCode::NoContributingClass: return "NoContributingClass";
    case ErrorCode::IncompleteGrouping: return "IncompleteGrouping";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::UsageError: return "UsageError";
  }
  return "UnknownError";
}

// Process exit class: 1 usage, 2 data/validation, 3 numeric failure.
inline int error_exit_class(ErrorCode code) {
  switch (code) {
    case ErrorCode::UsageError:
      return 1;
    case ErrorCode::NonFiniteLoss:
    case ErrorCode::GradCheckFailure:
      return 3;
    default:
      return 2;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + detail),
        code_(code) {}

  ErrorCode code() const { return code_; }
  int exit_class() const { return error_exit_class(code_); }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& detail) {
  throw Error(code, detail);
}

}  // namespace pathtree
