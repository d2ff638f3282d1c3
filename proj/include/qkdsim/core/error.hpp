#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace qkdsim {

enum class ErrorCode {
  ChecksumMismatch,
  MalformedField,
  WrongLineLength,
  DecayedOrbit,
  NonpositiveBrightness,
  InvalidExtrema,
  OutOfRange,
  NonpositiveElevation,
  ProfileGap,
  SyncFailed,
  EmptyKey,
  ZeroCounts,
  InvalidConfig,
  InvalidArgument,
  Io,
};

inline constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::MalformedField: return "MalformedField";
    case ErrorCode::WrongLineLength: return "WrongLineLength";
    case ErrorCode::DecayedOrbit: return "DecayedOrbit";
    case ErrorCode::NonpositiveBrightness: return "NonpositiveBrightness";
    case ErrorCode::InvalidExtrema: return "InvalidExtrema";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::NonpositiveElevation: return "NonpositiveElevation";
    case ErrorCode::ProfileGap: return "ProfileGap";
    case ErrorCode::SyncFailed: return "SyncFailed";
    case ErrorCode::EmptyKey: return "EmptyKey";
    case ErrorCode::ZeroCounts: return "ZeroCounts";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

/// Error raised by any simulator module. `module()` names the module that
/// detected the problem so pipeline failures can be attributed.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string module, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + " [" + module + "]: " + detail),
        code_(code),
        module_(std::move(module)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& module() const noexcept { return module_; }

 private:
  ErrorCode code_;
  std::string module_;
};

// Non-fatal conditions (stale elements, low counts, ...). Collected per thread
// so that pure functions can report them without changing their signatures.
struct Warning {
  std::string code;
  std::string message;
};

inline std::vector<Warning>& warnings() {
  thread_local std::vector<Warning> sink;
  return sink;
}

inline void warn(std::string code, std::string message) {
  warnings().push_back({std::move(code), std::move(message)});
}

inline bool has_warning(std::string_view code) {
  for (const auto& w : warnings())
    if (w.code == code) return true;
  return false;
}

inline void clear_warnings() { warnings().clear(); }

}  // namespace qkdsim
