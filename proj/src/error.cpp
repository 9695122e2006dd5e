#include "sentmask/error.hpp"

namespace sentmask {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "E_INVALID_ARGUMENT";
    case ErrorCode::kIo: return "E_IO";
    case ErrorCode::kParse: return "E_PARSE";
    case ErrorCode::kDuplicateId: return "E_DUPLICATE_ID";
    case ErrorCode::kBadLabel: return "E_BAD_LABEL";
    case ErrorCode::kEmptyDocument: return "E_EMPTY_DOCUMENT";
    case ErrorCode::kVocabularyMismatch: return "E_VOCABULARY_MISMATCH";
    case ErrorCode::kConfig: return "E_CONFIG";
    case ErrorCode::kCheckpoint: return "E_CHECKPOINT";
    case ErrorCode::kDiverged: return "E_DIVERGED";
    case ErrorCode::kEmptyDataset: return "E_EMPTY_DATASET";
    case ErrorCode::kUntrained: return "E_UNTRAINED";
  }
  return "E_UNKNOWN";
}

}  // namespace sentmask
