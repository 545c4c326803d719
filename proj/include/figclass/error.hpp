#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace figclass {

enum class ErrorKind {
  // taxonomy
  EmptyConceptSet,
  DuplicateConcept,
  MixedAspects,
  EmbeddingBackendError,
  // prompts
  AspectMismatch,
  InvalidOptions,
  UnknownAspect,
  RangeError,
  ParseFailure,
  InsufficientPool,
  // backend
  BackendUnavailable,
  ProtocolError,
  LogprobsUnavailable,
  InvalidRequest,
  // strategies
  NoDecision,
  InvalidK,
  ContextCapExceeded,
  // matching
  ZeroVector,
  DimensionMismatch,
  ConceptNotInSet,
  // eval
  EmptyEvaluation,
  LengthMismatch,
  DegenerateMarginals,
  UnknownLabel,
  UnknownFigure,
  // plumbing
  InvalidConfig,
  IoError,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Every failure raised by the library carries one of the kinds above so
/// callers (and the CLI exit-code mapping) can branch without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace figclass
