#include "figclass/error.hpp"

namespace figclass {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::EmptyConceptSet: return "EmptyConceptSet";
    case ErrorKind::DuplicateConcept: return "DuplicateConcept";
    case ErrorKind::MixedAspects: return "MixedAspects";
    case ErrorKind::EmbeddingBackendError: return "EmbeddingBackendError";
    case ErrorKind::AspectMismatch: return "AspectMismatch";
    case ErrorKind::InvalidOptions: return "InvalidOptions";
    case ErrorKind::UnknownAspect: return "UnknownAspect";
    case ErrorKind::RangeError: return "RangeError";
    case ErrorKind::ParseFailure: return "ParseFailure";
    case ErrorKind::InsufficientPool: return "InsufficientPool";
    case ErrorKind::BackendUnavailable: return "BackendUnavailable";
    case ErrorKind::ProtocolError: return "ProtocolError";
    case ErrorKind::LogprobsUnavailable: return "LogprobsUnavailable";
    case ErrorKind::InvalidRequest: return "InvalidRequest";
    case ErrorKind::NoDecision: return "NoDecision";
    case ErrorKind::InvalidK: return "InvalidK";
    case ErrorKind::ContextCapExceeded: return "ContextCapExceeded";
    case ErrorKind::ZeroVector: return "ZeroVector";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::ConceptNotInSet: return "ConceptNotInSet";
    case ErrorKind::EmptyEvaluation: return "EmptyEvaluation";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::DegenerateMarginals: return "DegenerateMarginals";
    case ErrorKind::UnknownLabel: return "UnknownLabel";
    case ErrorKind::UnknownFigure: return "UnknownFigure";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

}  // namespace figclass
