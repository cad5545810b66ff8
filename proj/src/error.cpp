#include "irec/error.hpp"

namespace irec {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::UnknownTag: return "UnknownTag";
    case ErrorCode::UnknownCard: return "UnknownCard";
    case ErrorCode::UnknownParent: return "UnknownParent";
    case ErrorCode::CycleDetected: return "CycleDetected";
    case ErrorCode::EmptyText: return "EmptyText";
    case ErrorCode::ProviderUnavailable: return "ProviderUnavailable";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::CorruptSnapshot: return "CorruptSnapshot";
    case ErrorCode::PathCountOutOfRange: return "PathCountOutOfRange";
    case ErrorCode::LlmUnavailable: return "LlmUnavailable";
    case ErrorCode::MalformedLlmResponse: return "MalformedLlmResponse";
    case ErrorCode::EmptyNote: return "EmptyNote";
    case ErrorCode::UnknownDecision: return "UnknownDecision";
    case ErrorCode::AlreadyConfirmed: return "AlreadyConfirmed";
    case ErrorCode::EmptyQuery: return "EmptyQuery";
    case ErrorCode::NotInSession: return "NotInSession";
    case ErrorCode::UnknownSession: return "UnknownSession";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

}  // namespace irec
