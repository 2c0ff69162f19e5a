#pragma once

#include <stdexcept>
#include <string>

namespace nases {

enum class ErrorKind {
  InvalidArchitecture,
  InvalidVector,
  SpaceTooLarge,
  Shape,
  Config,
  Numeric,
  MissingStats,
  NotPretrained,
  Format,
  EvaluationFailed,
  Io,
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::InvalidArchitecture: return "invalid-architecture";
    case ErrorKind::InvalidVector: return "invalid-vector";
    case ErrorKind::SpaceTooLarge: return "space-too-large";
    case ErrorKind::Shape: return "shape";
    case ErrorKind::Config: return "config";
    case ErrorKind::Numeric: return "numeric";
    case ErrorKind::MissingStats: return "missing-stats";
    case ErrorKind::NotPretrained: return "not-pretrained";
    case ErrorKind::Format: return "format";
    case ErrorKind::EvaluationFailed: return "evaluation-failed";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(std::string(to_string(kind)) + ": " + msg), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) { throw Error(kind, msg); }

}  // namespace nases
