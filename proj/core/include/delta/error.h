#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace delta {

enum class ErrorCode {
  kVocabMismatch,
  kInvalidLogits,
  kInvalidConfig,
  kInvalidDistribution,
  kIngestion,
  kConnection,
  kHandshake,
  kProtocol,
  kTimeout,
  kScorer,
  kInsufficientTrajectory,
  kUndefinedCosine,
  kEmptyInput,
  kInvalidK,
  kDegenerateGap,
  kIo,
};

std::string_view to_string(ErrorCode code);

// All library failures are reported as delta::Error; code() lets callers
// branch on the failure class without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace delta
