#include "delta/error.h"

namespace delta {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kVocabMismatch: return "vocabulary mismatch";
    case ErrorCode::kInvalidLogits: return "invalid logits";
    case ErrorCode::kInvalidConfig: return "invalid config";
    case ErrorCode::kInvalidDistribution: return "invalid distribution";
    case ErrorCode::kIngestion: return "ingestion error";
    case ErrorCode::kConnection: return "connection error";
    case ErrorCode::kHandshake: return "handshake error";
    case ErrorCode::kProtocol: return "protocol error";
    case ErrorCode::kTimeout: return "timeout";
    case ErrorCode::kScorer: return "scorer error";
    case ErrorCode::kInsufficientTrajectory: return "insufficient trajectory";
    case ErrorCode::kUndefinedCosine: return "undefined cosine";
    case ErrorCode::kEmptyInput: return "empty input";
    case ErrorCode::kInvalidK: return "invalid k";
    case ErrorCode::kDegenerateGap: return "degenerate gap";
    case ErrorCode::kIo: return "io error";
  }
  return "error";
}

}  // namespace delta
