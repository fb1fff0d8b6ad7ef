#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace zett {

enum class ErrorCode {
  InvalidArgument,
  InvalidFormat,
  Io,
  Unsegmentable,
  InputTooLong,
  IdOutOfRange,
  EmptyCorpus,
  InsufficientSubstrings,
  DimensionMismatch,
  ShapeMismatch,
  EmptyOverlap,
  NotScalar,
  StaleTape,
  SequenceTooLong,
  TokenOutsideSubset,
  IterationLimit,
  Unbounded,
  NumericFailure,
};

std::string_view to_string(ErrorCode code);

// All library failures are reported through this type; `code()` is what
// callers (and the CLI exit-code mapping) switch on.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace zett
