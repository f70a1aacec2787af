#pragma once

#include <atomic>
#include <cstdint>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "delta/error.h"
#include "delta/remote/protocol.h"
#include "delta/remote/transport.h"
#include "delta/scorer.h"

namespace delta::remote {

struct ScorerEndpoint {
  enum class Transport { kTcp, kStdio };

  Transport transport = Transport::kTcp;
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
  std::vector<std::string> command;
  int timeout_ms = 30000;

  // "tcp://host:port" or "stdio:<command> [args...]".
  static ScorerEndpoint parse(const std::string& spec);
  std::string to_string() const;
};

// A Scorer backed by an external process speaking protocol v1. One
// connection is shared by all callers; requests are pipelined and responses
// are routed back by id, so score() may be called from many threads.
class RemoteScorer final : public Scorer {
 public:
  // Connects and completes the handshake. Throws kConnection, kTimeout or
  // kHandshake.
  explicit RemoteScorer(const ScorerEndpoint& endpoint);
  // Runs the protocol over an already-connected descriptor (e.g. one end of
  // a socketpair). Takes ownership of fd.
  RemoteScorer(int fd, int timeout_ms, std::string label = "remote");
  ~RemoteScorer() override;

  std::size_t vocab_size() const override { return vocab_size_; }
  LogitVector score(std::span<const TokenId> prefix) const override;
  std::string label() const override { return label_; }

  // Sends one score request under the caller's id. Throws kProtocol when the
  // id is already in flight and kVocabMismatch for out-of-range tokens.
  std::future<LogitVector> submit(std::span<const TokenId> prefix, std::int64_t request_id) const;
  // submit() followed by a bounded wait; throws kTimeout.
  LogitVector remote_score(std::span<const TokenId> prefix, std::int64_t request_id) const;

 private:
  void handshake();
  void reader_loop();
  void fail_all(ErrorCode code, const std::string& message);

  std::unique_ptr<Subprocess> process_;
  std::unique_ptr<LineChannel> channel_;
  int timeout_ms_;
  std::string label_;
  std::size_t vocab_size_ = 0;

  mutable std::mutex mu_;
  mutable std::map<std::int64_t, std::promise<LogitVector>> pending_;
  mutable std::atomic<std::int64_t> next_id_{1LL << 40};
  std::string broken_;  // guarded by mu_; non-empty once the stream is unusable
  std::atomic<bool> stop_{false};
  std::thread reader_;
};

}  // namespace delta::remote
