#pragma once

#include <stdexcept>
#include <string>

namespace abc {

/// Machine-readable failure class. The numeric values are the CLI exit codes.
enum class ErrorCode : int {
  validation = 2,
  verification = 3,
  numerical = 4,
  io = 5,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::validation: return "validation";
    case ErrorCode::verification: return "verification";
    case ErrorCode::numerical: return "numerical";
    case ErrorCode::io: return "io";
  }
  return "unknown";
}

/// Every library failure carries the pipeline stage that raised it.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), code_(code), stage_(std::move(stage)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& stage() const noexcept { return stage_; }

 private:
  ErrorCode code_;
  std::string stage_;
};

inline Error validation_error(std::string stage, const std::string& what) {
  return Error(ErrorCode::validation, std::move(stage), what);
}

inline Error verification_error(std::string stage, const std::string& what) {
  return Error(ErrorCode::verification, std::move(stage), what);
}

inline Error numerical_error(std::string stage, const std::string& what) {
  return Error(ErrorCode::numerical, std::move(stage), what);
}

inline Error io_error(std::string stage, const std::string& what) {
  return Error(ErrorCode::io, std::move(stage), what);
}

}  // namespace abc
