#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ngauge {

enum class ErrorCode {
  // I/O and ingestion
  Io,
  ParseError,
  DimensionMismatch,
  RangeError,
  ProvenanceViolation,
  // estimator
  DegenerateSignal,
  DegenerateConcept,
  MissingGuide,
  IndexOutOfRange,
  ZeroGroundTruth,
  // aggregation
  EmptyRatings,
  MissingPriorScore,
  NoCalibrationData,
  // simulator
  AllDegenerate,
  NoFeasibleCell,
  // scoring
  UnknownConcept,
  EmptyExplanation,
  SyntaxError,
  // generic
  InvalidArgument,
  Config,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Process exit status for an error class: 2 I/O, 3 validation,
/// 4 degenerate math, 5 configuration.
int exit_code_for(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Explanation grammar failure; `position()` is a byte offset into the input.
class SyntaxError : public Error {
 public:
  SyntaxError(std::size_t position, const std::string& message);

  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace ngauge
