#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace taxoria {

enum class ErrorCode {
  MalformedDocument,
  SchemaViolation,
  EmptyDocument,
  PathNotFound,
  InvariantViolation,
  RootMismatch,
  LlmUnreachable,
  UnparseableResponse,
  EmptyBatch,
  FileNotFound,
  FormatError,
  OutOfVocabulary,
  EndpointUnreachable,
  ZeroVector,
  DimensionMismatch,
  NoMeasurableEdges,
  KgUnreachable,
  CorruptCheckpoint,
  NotFound,
  InvalidConfig,
  Io,
};

std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace taxoria
