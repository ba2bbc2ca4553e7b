#include "taxoria/error.hpp"

namespace taxoria {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedDocument: return "MalformedDocument";
    case ErrorCode::SchemaViolation: return "SchemaViolation";
    case ErrorCode::EmptyDocument: return "EmptyDocument";
    case ErrorCode::PathNotFound: return "PathNotFound";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
    case ErrorCode::RootMismatch: return "RootMismatch";
    case ErrorCode::LlmUnreachable: return "LlmUnreachable";
    case ErrorCode::UnparseableResponse: return "UnparseableResponse";
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::FileNotFound: return "FileNotFound";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::OutOfVocabulary: return "OutOfVocabulary";
    case ErrorCode::EndpointUnreachable: return "EndpointUnreachable";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NoMeasurableEdges: return "NoMeasurableEdges";
    case ErrorCode::KgUnreachable: return "KgUnreachable";
    case ErrorCode::CorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace taxoria
