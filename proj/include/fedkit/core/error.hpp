#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fedkit {

/// Stable error vocabulary shared by every module.
enum class ErrorCode {
  UnmappedTopic,
  IncompatibleUnit,
  SyntaxError,
  SchemaError,
  UnknownTopic,
  DuplicateParticipant,
  UnknownSite,
  NotOffered,
  StaleSeq,
  PermissionDenied,
  NoActiveRun,
  InvalidArgument,
  UnknownRun,
  ParticipantTimeout,
  ParticipantFault,
  NumericalOverflow,
  UnsupportedTopology,
  GridMismatch,
  ConfigError,
  BindError,
  ProtocolError,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::UnmappedTopic: return "UnmappedTopic";
    case ErrorCode::IncompatibleUnit: return "IncompatibleUnit";
    case ErrorCode::SyntaxError: return "SyntaxError";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::UnknownTopic: return "UnknownTopic";
    case ErrorCode::DuplicateParticipant: return "DuplicateParticipant";
    case ErrorCode::UnknownSite: return "UnknownSite";
    case ErrorCode::NotOffered: return "NotOffered";
    case ErrorCode::StaleSeq: return "StaleSeq";
    case ErrorCode::PermissionDenied: return "PermissionDenied";
    case ErrorCode::NoActiveRun: return "NoActiveRun";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::UnknownRun: return "UnknownRun";
    case ErrorCode::ParticipantTimeout: return "ParticipantTimeout";
    case ErrorCode::ParticipantFault: return "ParticipantFault";
    case ErrorCode::NumericalOverflow: return "NumericalOverflow";
    case ErrorCode::UnsupportedTopology: return "UnsupportedTopology";
    case ErrorCode::GridMismatch: return "GridMismatch";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::BindError: return "BindError";
    case ErrorCode::ProtocolError: return "ProtocolError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail),
        code_(code),
        detail_(detail) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& detail) {
  throw Error(code, detail);
}

}  // namespace fedkit
