#ifndef SENTMASK_ERROR_HPP
#define SENTMASK_ERROR_HPP

#include <stdexcept>
#include <string>

namespace sentmask {

// Stable, machine-parseable failure categories. The CLI prints the code name
// and uses the numeric value (offset by 10) as its exit status.
enum class ErrorCode {
  kInvalidArgument = 1,
  kIo,
  kParse,
  kDuplicateId,
  kBadLabel,
  kEmptyDocument,
  kVocabularyMismatch,
  kConfig,
  kCheckpoint,
  kDiverged,
  kEmptyDataset,
  kUntrained,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace sentmask

#endif  // SENTMASK_ERROR_HPP
