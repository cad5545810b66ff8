#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace irec {

enum class ErrorCode {
  UnknownTag,
  UnknownCard,
  UnknownParent,
  CycleDetected,
  EmptyText,
  ProviderUnavailable,
  DimensionMismatch,
  IoError,
  VersionMismatch,
  CorruptSnapshot,
  PathCountOutOfRange,
  LlmUnavailable,
  MalformedLlmResponse,
  EmptyNote,
  UnknownDecision,
  AlreadyConfirmed,
  EmptyQuery,
  NotInSession,
  UnknownSession,
  InvalidArgument,
  InvalidConfig,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace irec
