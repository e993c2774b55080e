#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace reasonlab {

enum class ErrorKind {
  kInvalidArgument,
  kEmptyTraceList,
  kUnknownToken,
  kNonPositiveTemperature,
  kInvalidTopP,
  kNonFiniteLoss,
  kMalformedTruth,
  kEmptyBatch,
  kPromptMismatch,
  kLengthMismatch,
  kDegenerateGroup,
  kPromptUnusable,
  kStepOutOfRange,
  kExampleTooLong,
  kMissingInput,
  kCorruptCheckpoint,
  kShapeMismatch,
  kEmptyTaskSet,
  kEmptySuite,
  kStageOrder,
  kIo,
};

std::string_view error_kind_name(ErrorKind kind);

// All library failures surface as this exception; callers branch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace reasonlab
