#include "neurongauge/error.hpp"

namespace ngauge {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::Io: return "IoError";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::RangeError: return "RangeError";
    case ErrorCode::ProvenanceViolation: return "ProvenanceViolation";
    case ErrorCode::DegenerateSignal: return "DegenerateSignal";
    case ErrorCode::DegenerateConcept: return "DegenerateConcept";
    case ErrorCode::MissingGuide: return "MissingGuide";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::ZeroGroundTruth: return "ZeroGroundTruth";
    case ErrorCode::EmptyRatings: return "EmptyRatings";
    case ErrorCode::MissingPriorScore: return "MissingPriorScore";
    case ErrorCode::NoCalibrationData: return "NoCalibrationData";
    case ErrorCode::AllDegenerate: return "AllDegenerate";
    case ErrorCode::NoFeasibleCell: return "NoFeasibleCell";
    case ErrorCode::UnknownConcept: return "UnknownConcept";
    case ErrorCode::EmptyExplanation: return "EmptyExplanation";
    case ErrorCode::SyntaxError: return "SyntaxError";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Config: return "ConfigError";
  }
  return "UnknownError";
}

int exit_code_for(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::Io:
      return 2;
    case ErrorCode::DegenerateSignal:
    case ErrorCode::DegenerateConcept:
    case ErrorCode::ZeroGroundTruth:
    case ErrorCode::AllDegenerate:
      return 4;
    case ErrorCode::Config:
    case ErrorCode::NoFeasibleCell:
      return 5;
    default:
      return 3;
  }
}

SyntaxError::SyntaxError(std::size_t position, const std::string& message)
    : Error(ErrorCode::SyntaxError, "at offset " + std::to_string(position) + ": " + message),
      position_(position) {}

}  // namespace ngauge
