#include "delta/remote/protocol.h"

#include <cmath>
#include <limits>
#include <map>
#include <unordered_set>

#include <json.hpp>

#include "delta/error.h"

namespace delta::remote {
namespace {

using ojson = nlohmann::ordered_json;

nlohmann::json parse_object(std::string_view line, ErrorCode code) {
  nlohmann::json j = nlohmann::json::parse(line, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) throw Error(code, "frame is not valid JSON");
  if (!j.is_object()) throw Error(code, "frame is not a JSON object");
  return j;
}

std::int64_t require_int(const nlohmann::json& j, const char* key, ErrorCode code) {
  auto it = j.find(key);
  if (it == j.end()) throw Error(code, std::string("missing field '") + key + "'");
  if (!it->is_number_integer()) throw Error(code, std::string("field '") + key + "' is not an integer");
  return it->get<std::int64_t>();
}

double require_number(const nlohmann::json& j, ErrorCode code, const char* what) {
  if (!j.is_number()) throw Error(code, std::string(what) + " is not a number");
  return j.get<double>();
}

}  // namespace

std::string encode(const HelloFrame& frame) {
  ojson j;
  j["type"] = "hello";
  j["version"] = frame.version;
  j["vocab_size"] = frame.vocab_size;
  return j.dump();
}

std::string encode(const ScoreRequest& frame) {
  ojson j;
  j["type"] = "score";
  j["id"] = frame.id;
  j["tokens"] = frame.tokens;
  return j.dump();
}

std::string encode(const LogitsFrame& frame) {
  ojson j;
  j["type"] = "logits";
  j["id"] = frame.id;
  if (const auto* dense = std::get_if<std::vector<double>>(&frame.payload)) {
    j["dense"] = *dense;
  } else {
    const auto& sparse = std::get<SparseLogits>(frame.payload);
    auto topk = ojson::array();
    for (const auto& [t, v] : sparse.entries) topk.push_back({t, v});
    j["topk"] = std::move(topk);
    j["rest"] = sparse.rest;
  }
  return j.dump();
}

std::string encode(const ErrorFrame& frame) {
  ojson j;
  j["type"] = "error";
  j["id"] = frame.id ? ojson(*frame.id) : ojson(nullptr);
  j["message"] = frame.message;
  return j.dump();
}

HelloFrame parse_hello(std::string_view line) {
  const auto j = parse_object(line, ErrorCode::kHandshake);
  auto type = j.find("type");
  if (type == j.end() || *type != "hello") {
    throw Error(ErrorCode::kHandshake, "expected a hello frame");
  }
  HelloFrame hello;
  hello.version = static_cast<int>(require_int(j, "version", ErrorCode::kHandshake));
  if (hello.version != kProtocolVersion) {
    throw Error(ErrorCode::kHandshake, "server speaks protocol version " +
                                           std::to_string(hello.version) +
                                           ", client supports version " +
                                           std::to_string(kProtocolVersion));
  }
  hello.vocab_size = require_int(j, "vocab_size", ErrorCode::kHandshake);
  if (hello.vocab_size <= 0) throw Error(ErrorCode::kHandshake, "vocab_size must be positive");
  return hello;
}

ServerFrame parse_server_frame(std::string_view line) {
  constexpr auto kCode = ErrorCode::kProtocol;
  const auto j = parse_object(line, kCode);
  auto type_it = j.find("type");
  if (type_it == j.end() || !type_it->is_string()) throw Error(kCode, "missing frame type");
  const std::string type = type_it->get<std::string>();

  if (type == "hello") return parse_hello(line);

  if (type == "error") {
    ErrorFrame frame;
    auto id = j.find("id");
    if (id != j.end() && id->is_number_integer()) frame.id = id->get<std::int64_t>();
    auto msg = j.find("message");
    frame.message = (msg != j.end() && msg->is_string()) ? msg->get<std::string>() : "";
    return frame;
  }

  if (type == "logits") {
    LogitsFrame frame;
    frame.id = require_int(j, "id", kCode);
    if (auto dense = j.find("dense"); dense != j.end()) {
      if (!dense->is_array()) throw Error(kCode, "dense is not an array");
      std::vector<double> values;
      values.reserve(dense->size());
      for (const auto& v : *dense) values.push_back(require_number(v, kCode, "dense entry"));
      frame.payload = std::move(values);
      return frame;
    }
    auto topk = j.find("topk");
    auto rest = j.find("rest");
    if (topk == j.end() || rest == j.end() || !topk->is_array()) {
      throw Error(kCode, "logits frame has neither dense nor topk/rest");
    }
    SparseLogits sparse;
    sparse.rest = require_number(*rest, kCode, "rest");
    for (const auto& pair : *topk) {
      if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number_integer()) {
        throw Error(kCode, "topk entry is not an [id, value] pair");
      }
      sparse.entries.emplace_back(pair[0].get<TokenId>(),
                                  require_number(pair[1], kCode, "topk value"));
    }
    frame.payload = std::move(sparse);
    return frame;
  }

  throw Error(kCode, "unknown frame type '" + type + "'");
}

ScoreRequest parse_score_request(std::string_view line) {
  constexpr auto kCode = ErrorCode::kProtocol;
  const auto j = parse_object(line, kCode);
  auto type = j.find("type");
  if (type == j.end() || *type != "score") throw Error(kCode, "expected a score frame");
  ScoreRequest req;
  req.id = require_int(j, "id", kCode);
  auto tokens = j.find("tokens");
  if (tokens == j.end() || !tokens->is_array()) throw Error(kCode, "missing token array");
  req.tokens.reserve(tokens->size());
  for (const auto& t : *tokens) {
    if (!t.is_number_integer()) throw Error(kCode, "token is not an integer");
    const auto v = t.get<std::int64_t>();
    if (v < 0 || v > std::numeric_limits<TokenId>::max()) {
      throw Error(kCode, "token id " + std::to_string(v) + " out of range");
    }
    req.tokens.push_back(static_cast<TokenId>(v));
  }
  return req;
}

LogitVector densify(const SparseLogits& sparse, std::size_t vocab_size) {
  std::vector<double> out(vocab_size, sparse.rest);
  std::vector<bool> seen(vocab_size, false);
  for (const auto& [t, v] : sparse.entries) {
    if (t < 0 || static_cast<std::size_t>(t) >= vocab_size) {
      throw Error(ErrorCode::kProtocol, "sparse token id " + std::to_string(t) +
                                            " outside vocabulary of size " +
                                            std::to_string(vocab_size));
    }
    if (seen[static_cast<std::size_t>(t)]) {
      throw Error(ErrorCode::kProtocol, "duplicate sparse token id " + std::to_string(t));
    }
    seen[static_cast<std::size_t>(t)] = true;
    out[static_cast<std::size_t>(t)] = v;
  }
  return LogitVector(std::move(out));
}

std::optional<SparseLogits> sparsify(const LogitVector& logits) {
  std::map<double, std::size_t> freq;
  for (double v : logits.scores()) ++freq[v];
  double mode = 0.0;
  std::size_t best = 0;
  for (const auto& [v, n] : freq) {
    if (n > best) {
      best = n;
      mode = v;
    }
  }
  // A pair costs roughly twice a dense entry.
  if (best * 2 <= logits.size()) return std::nullopt;
  SparseLogits sparse;
  sparse.rest = mode;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    // Compare bit patterns so that -0.0 and 0.0 stay distinct.
    if (std::signbit(logits[i]) != std::signbit(mode) || logits[i] != mode) {
      sparse.entries.emplace_back(static_cast<TokenId>(i), logits[i]);
    }
  }
  return sparse;
}

}  // namespace delta::remote
