#pragma once

// Scorer wire protocol, version 1. Frames are newline-delimited UTF-8 JSON
// objects; the strings produced here carry no trailing newline.
//
//   hello  (server -> client) {"type":"hello","version":1,"vocab_size":<int>}
//   score  (client -> server) {"type":"score","id":<int>,"tokens":[<int>...]}
//   logits (server -> client) {"type":"logits","id":<int>,"dense":[<float>...]}
//                          or {"type":"logits","id":<int>,"topk":[[<int>,<float>]...],"rest":<float>}
//   error  (server -> client) {"type":"error","id":<int|null>,"message":<string>}
//
// Logits are raw and temperature-free. Floats are written with shortest
// round-trip precision.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "delta/core.h"

namespace delta::remote {

inline constexpr int kProtocolVersion = 1;

struct HelloFrame {
  int version = kProtocolVersion;
  std::int64_t vocab_size = 0;
};

struct ScoreRequest {
  std::int64_t id = 0;
  std::vector<TokenId> tokens;
};

struct SparseLogits {
  std::vector<std::pair<TokenId, double>> entries;
  double rest = 0.0;
};

struct LogitsFrame {
  std::int64_t id = 0;
  std::variant<std::vector<double>, SparseLogits> payload;
};

struct ErrorFrame {
  std::optional<std::int64_t> id;
  std::string message;
};

using ServerFrame = std::variant<HelloFrame, LogitsFrame, ErrorFrame>;

std::string encode(const HelloFrame& frame);
std::string encode(const ScoreRequest& frame);
std::string encode(const LogitsFrame& frame);
std::string encode(const ErrorFrame& frame);

// Throws kProtocol on malformed frames.
ServerFrame parse_server_frame(std::string_view line);
ScoreRequest parse_score_request(std::string_view line);

// Reads a hello frame; throws kHandshake on schema violations or a version
// other than kProtocolVersion.
HelloFrame parse_hello(std::string_view line);

// Expands sparse logits to a dense length-V vector. Throws kProtocol on
// duplicate or out-of-range ids and kInvalidLogits on non-finite values.
LogitVector densify(const SparseLogits& sparse, std::size_t vocab_size);

// Returns the sparse form when it is exact and shorter than the dense form:
// all entries equal to the most common value collapse into `rest`.
std::optional<SparseLogits> sparsify(const LogitVector& logits);

}  // namespace delta::remote
