#pragma once

#include <stdexcept>
#include <string>

namespace pat {

/// Failure categories surfaced by the library. The CLI maps these onto exit
/// codes (config = 2, solver = 3, io = 4).
enum class ErrorKind {
  UnreadableFile,
  UnsupportedSize,
  RowOutOfRange,
  GeometryInsideGrid,
  WindowTooShort,
  DimensionMismatch,
  DeltaOutOfRange,
  NonConvergence,
  InvalidArgument,
  DegenerateCost,
  Lambda0TooLarge,
  CapExceeded,
  RoundCapExceeded,
  Io,
  Config,
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::UnreadableFile: return "UnreadableFile";
    case ErrorKind::UnsupportedSize: return "UnsupportedSize";
    case ErrorKind::RowOutOfRange: return "RowOutOfRange";
    case ErrorKind::GeometryInsideGrid: return "GeometryInsideGrid";
    case ErrorKind::WindowTooShort: return "WindowTooShort";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::DeltaOutOfRange: return "DeltaOutOfRange";
    case ErrorKind::NonConvergence: return "NonConvergence";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::DegenerateCost: return "DegenerateCost";
    case ErrorKind::Lambda0TooLarge: return "Lambda0TooLarge";
    case ErrorKind::CapExceeded: return "CapExceeded";
    case ErrorKind::RoundCapExceeded: return "RoundCapExceeded";
    case ErrorKind::Io: return "Io";
    case ErrorKind::Config: return "Config";
  }
  return "Unknown";
}

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) throw Error(kind, what);
}

}  // namespace pat
