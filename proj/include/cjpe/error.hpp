#pragma once

#include <stdexcept>
#include <string>

namespace cjpe {

enum class ErrorCode {
  InvalidArgument,
  Parse,
  Io,
  EmptyAfterCleaning,
  ConflictingSameSentence,
  NoPetitions,
  InsufficientClassSize,
  RowFailed,
  DimensionMismatch,
  TrainingDiverged,
  SingleClass,
  LengthMismatch,
  EmptyInput,
  RaggedRows,
  TooFewRaters,
  DocMismatch,
  Checkpoint,
  Bridge,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Parse: return "Parse";
    case ErrorCode::Io: return "Io";
    case ErrorCode::EmptyAfterCleaning: return "EmptyAfterCleaning";
    case ErrorCode::ConflictingSameSentence: return "ConflictingSameSentence";
    case ErrorCode::NoPetitions: return "NoPetitions";
    case ErrorCode::InsufficientClassSize: return "InsufficientClassSize";
    case ErrorCode::RowFailed: return "RowFailed";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::TrainingDiverged: return "TrainingDiverged";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::RaggedRows: return "RaggedRows";
    case ErrorCode::TooFewRaters: return "TooFewRaters";
    case ErrorCode::DocMismatch: return "DocMismatch";
    case ErrorCode::Checkpoint: return "Checkpoint";
    case ErrorCode::Bridge: return "Bridge";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (the CLI in particular) can map it onto an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Raised when embedding one chunk of a document fails.
class RowError : public Error {
 public:
  RowError(std::size_t row, const std::string& what)
      : Error(ErrorCode::RowFailed, "chunk " + std::to_string(row) + ": " + what), row_(row) {}

  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

}  // namespace cjpe
