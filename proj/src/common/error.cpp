#include "zett/common/error.hpp"

namespace zett {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InvalidFormat: return "InvalidFormat";
    case ErrorCode::Io: return "Io";
    case ErrorCode::Unsegmentable: return "Unsegmentable";
    case ErrorCode::InputTooLong: return "InputTooLong";
    case ErrorCode::IdOutOfRange: return "IdOutOfRange";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::InsufficientSubstrings: return "InsufficientSubstrings";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::EmptyOverlap: return "EmptyOverlap";
    case ErrorCode::NotScalar: return "NotScalar";
    case ErrorCode::StaleTape: return "StaleTape";
    case ErrorCode::SequenceTooLong: return "SequenceTooLong";
    case ErrorCode::TokenOutsideSubset: return "TokenOutsideSubset";
    case ErrorCode::IterationLimit: return "IterationLimit";
    case ErrorCode::Unbounded: return "Unbounded";
    case ErrorCode::NumericFailure: return "NumericFailure";
  }
  return "Unknown";
}

}  // namespace zett
