#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ug {

/// Error codes shared by every module. The textual name of a code is part of
/// the external surface (transcripts, CLI records and HTTP 422 bodies).
enum class ErrorCode {
  DuplicateId,
  FactConflict,
  FixedLayerViolation,
  FixedConflict,
  MalformedRule,
  UnknownItem,
  InvalidKB,
  InvalidQuery,
  NoDecision,
  EmptyTrace,
  NoCandidateRules,
  SeqGap,
  KindMismatch,
  UserMismatch,
  RetractUnknown,
  MissingMemory,
  MissingExpected,
  IoFailure,
  CorruptRecord,
  ParseError,
  UnknownPersona,
};

std::string_view code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Load failure of an event-log file; `line` is 1-based.
class CorruptRecord : public Error {
 public:
  CorruptRecord(std::size_t line, const std::string& message)
      : Error(ErrorCode::CorruptRecord,
              "corrupt record at line " + std::to_string(line) + ": " + message),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace ug
