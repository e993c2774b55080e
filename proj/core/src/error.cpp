#include "reasonlab/error.hpp"

namespace reasonlab {

std::string_view error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "InvalidArgument";
    case ErrorKind::kEmptyTraceList: return "EmptyTraceList";
    case ErrorKind::kUnknownToken: return "UnknownToken";
    case ErrorKind::kNonPositiveTemperature: return "NonPositiveTemperature";
    case ErrorKind::kInvalidTopP: return "InvalidTopP";
    case ErrorKind::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::kMalformedTruth: return "MalformedTruth";
    case ErrorKind::kEmptyBatch: return "EmptyBatch";
    case ErrorKind::kPromptMismatch: return "PromptMismatch";
    case ErrorKind::kLengthMismatch: return "LengthMismatch";
    case ErrorKind::kDegenerateGroup: return "DegenerateGroup";
    case ErrorKind::kPromptUnusable: return "PromptUnusable";
    case ErrorKind::kStepOutOfRange: return "StepOutOfRange";
    case ErrorKind::kExampleTooLong: return "ExampleTooLong";
    case ErrorKind::kMissingInput: return "MissingInput";
    case ErrorKind::kCorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorKind::kShapeMismatch: return "ShapeMismatch";
    case ErrorKind::kEmptyTaskSet: return "EmptyTaskSet";
    case ErrorKind::kEmptySuite: return "EmptySuite";
    case ErrorKind::kStageOrder: return "StageOrder";
    case ErrorKind::kIo: return "Io";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(error_kind_name(kind)) + ": " + message),
      kind_(kind) {}

}  // namespace reasonlab
