#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace trajscore {

/**
 * Machine-readable error codes shared by the library, the CLI exit-code
 * mapping, and the HTTP service's error bodies.
 */
enum class ErrorCode {
  // Data / validation
  EmptyStep,
  EmptyTrajectory,
  NoSteps,
  MalformedThinkTag,
  Malformed,
  EmptySteps,
  LengthMismatch,
  DimMismatch,
  EmptyNegatives,
  InsufficientNegatives,
  DegenerateGroup,
  EmptyTokens,
  BadRange,
  NoGoldAnswer,
  InvalidConfig,
  InvalidArgument,
  // I/O
  Io,
  // Provider
  ProviderUnavailable,
  RateLimited,
  UnparseableJudgment,
  EmptyTemplate,
};

inline std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyStep: return "empty_step";
    case ErrorCode::EmptyTrajectory: return "empty_trajectory";
    case ErrorCode::NoSteps: return "no_steps";
    case ErrorCode::MalformedThinkTag: return "malformed_think_tag";
    case ErrorCode::Malformed: return "malformed";
    case ErrorCode::EmptySteps: return "empty_steps";
    case ErrorCode::LengthMismatch: return "length_mismatch";
    case ErrorCode::DimMismatch: return "dim_mismatch";
    case ErrorCode::EmptyNegatives: return "empty_negatives";
    case ErrorCode::InsufficientNegatives: return "insufficient_negatives";
    case ErrorCode::DegenerateGroup: return "degenerate_group";
    case ErrorCode::EmptyTokens: return "empty_tokens";
    case ErrorCode::BadRange: return "bad_range";
    case ErrorCode::NoGoldAnswer: return "no_gold_answer";
    case ErrorCode::InvalidConfig: return "invalid_config";
    case ErrorCode::InvalidArgument: return "invalid_argument";
    case ErrorCode::Io: return "io";
    case ErrorCode::ProviderUnavailable: return "provider_unavailable";
    case ErrorCode::RateLimited: return "rate_limited";
    case ErrorCode::UnparseableJudgment: return "unparseable_judgment";
    case ErrorCode::EmptyTemplate: return "empty_template";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline bool is_provider_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::ProviderUnavailable:
    case ErrorCode::RateLimited:
    case ErrorCode::UnparseableJudgment:
    case ErrorCode::EmptyTemplate:
      return true;
    default:
      return false;
  }
}

inline bool is_io_error(ErrorCode code) { return code == ErrorCode::Io; }

}  // namespace trajscore
