#include "delta/remote/client.h"

#include <charconv>
#include <sstream>

#include "delta/error.h"

namespace delta::remote {

ScorerEndpoint ScorerEndpoint::parse(const std::string& spec) {
  ScorerEndpoint ep;
  if (spec.starts_with("tcp://")) {
    const std::string rest = spec.substr(6);
    const auto colon = rest.rfind(':');
    if (colon == std::string::npos) {
      throw Error(ErrorCode::kInvalidConfig, "endpoint '" + spec + "' lacks a port");
    }
    ep.transport = Transport::kTcp;
    ep.host = rest.substr(0, colon);
    unsigned port = 0;
    const auto port_str = rest.substr(colon + 1);
    auto [ptr, ec] = std::from_chars(port_str.data(), port_str.data() + port_str.size(), port);
    if (ec != std::errc() || ptr != port_str.data() + port_str.size() || port == 0 ||
        port > 65535) {
      throw Error(ErrorCode::kInvalidConfig, "endpoint '" + spec + "' has an invalid port");
    }
    ep.port = static_cast<std::uint16_t>(port);
    return ep;
  }
  if (spec.starts_with("stdio:")) {
    ep.transport = Transport::kStdio;
    std::istringstream words(spec.substr(6));
    for (std::string w; words >> w;) ep.command.push_back(w);
    if (ep.command.empty()) {
      throw Error(ErrorCode::kInvalidConfig, "endpoint '" + spec + "' has no command");
    }
    return ep;
  }
  throw Error(ErrorCode::kInvalidConfig, "unrecognized endpoint '" + spec + "'");
}

std::string ScorerEndpoint::to_string() const {
  if (transport == Transport::kTcp) return "tcp://" + host + ":" + std::to_string(port);
  std::string out = "stdio:";
  for (std::size_t i = 0; i < command.size(); ++i) {
    if (i) out += ' ';
    out += command[i];
  }
  return out;
}

RemoteScorer::RemoteScorer(const ScorerEndpoint& endpoint)
    : timeout_ms_(endpoint.timeout_ms), label_(endpoint.to_string()) {
  int fd = -1;
  if (endpoint.transport == ScorerEndpoint::Transport::kTcp) {
    fd = connect_tcp(endpoint.host, endpoint.port, endpoint.timeout_ms);
  } else {
    process_ = std::make_unique<Subprocess>(endpoint.command);
    fd = process_->release_fd();
  }
  channel_ = std::make_unique<LineChannel>(fd, fd);
  handshake();
  reader_ = std::thread([this] { reader_loop(); });
}

RemoteScorer::RemoteScorer(int fd, int timeout_ms, std::string label)
    : channel_(std::make_unique<LineChannel>(fd, fd)),
      timeout_ms_(timeout_ms),
      label_(std::move(label)) {
  handshake();
  reader_ = std::thread([this] { reader_loop(); });
}

RemoteScorer::~RemoteScorer() {
  stop_ = true;
  if (channel_) channel_->shutdown();
  if (reader_.joinable()) reader_.join();
  fail_all(ErrorCode::kConnection, "scorer closed");
  channel_.reset();
  process_.reset();
}

void RemoteScorer::handshake() {
  std::string line;
  switch (channel_->read_line(line, timeout_ms_)) {
    case LineChannel::ReadStatus::kTimeout:
      throw Error(ErrorCode::kConnection, "no hello from " + label_ + " within " +
                                           std::to_string(timeout_ms_) + " ms");
    case LineChannel::ReadStatus::kClosed:
      throw Error(ErrorCode::kConnection, label_ + " closed before hello");
    case LineChannel::ReadStatus::kLine:
      break;
  }
  vocab_size_ = static_cast<std::size_t>(parse_hello(line).vocab_size);
}

void RemoteScorer::fail_all(ErrorCode code, const std::string& message) {
  std::map<std::int64_t, std::promise<LogitVector>> pending;
  {
    std::lock_guard lock(mu_);
    if (broken_.empty()) broken_ = message;
    pending.swap(pending_);
  }
  for (auto& [id, promise] : pending) {
    promise.set_exception(std::make_exception_ptr(
        Error(code, "request " + std::to_string(id) + ": " + message)));
  }
}

void RemoteScorer::reader_loop() {
  std::string line;
  while (!stop_) {
    const auto status = channel_->read_line(line, 50);
    if (status == LineChannel::ReadStatus::kTimeout) continue;
    if (status == LineChannel::ReadStatus::kClosed) {
      fail_all(ErrorCode::kConnection, label_ + " closed the connection");
      return;
    }
    ServerFrame frame;
    try {
      frame = parse_server_frame(line);
    } catch (const Error& e) {
      fail_all(ErrorCode::kProtocol, std::string("malformed frame from server: ") + e.what());
      return;
    }

    if (auto* err = std::get_if<ErrorFrame>(&frame)) {
      if (!err->id) {
        fail_all(ErrorCode::kScorer, "server error: " + err->message);
        return;
      }
      std::promise<LogitVector> promise;
      {
        std::lock_guard lock(mu_);
        auto it = pending_.find(*err->id);
        if (it == pending_.end()) continue;
        promise = std::move(it->second);
        pending_.erase(it);
      }
      promise.set_exception(std::make_exception_ptr(
          Error(ErrorCode::kScorer, "server error for request " + std::to_string(*err->id) +
                                        ": " + err->message)));
      continue;
    }

    if (std::holds_alternative<HelloFrame>(frame)) {
      fail_all(ErrorCode::kProtocol, "unexpected hello after handshake");
      return;
    }

    auto& logits = std::get<LogitsFrame>(frame);
    std::promise<LogitVector> promise;
    {
      std::lock_guard lock(mu_);
      auto it = pending_.find(logits.id);
      // Responses to abandoned (timed-out) requests are dropped.
      if (it == pending_.end()) continue;
      promise = std::move(it->second);
      pending_.erase(it);
    }
    try {
      if (auto* dense = std::get_if<std::vector<double>>(&logits.payload)) {
        if (dense->size() != vocab_size_) {
          throw Error(ErrorCode::kProtocol, "dense logits of length " +
                                                std::to_string(dense->size()) + ", expected " +
                                                std::to_string(vocab_size_));
        }
        promise.set_value(LogitVector(std::move(*dense)));
      } else {
        promise.set_value(densify(std::get<SparseLogits>(logits.payload), vocab_size_));
      }
    } catch (const Error&) {
      promise.set_exception(std::current_exception());
    }
  }
}

std::future<LogitVector> RemoteScorer::submit(std::span<const TokenId> prefix,
                                              std::int64_t request_id) const {
  for (TokenId t : prefix) {
    if (t < 0 || static_cast<std::size_t>(t) >= vocab_size_) {
      throw Error(ErrorCode::kVocabMismatch, "token " + std::to_string(t) +
                                                 " outside remote vocabulary of size " +
                                                 std::to_string(vocab_size_));
    }
  }
  std::future<LogitVector> future;
  {
    std::lock_guard lock(mu_);
    if (!broken_.empty()) throw Error(ErrorCode::kConnection, broken_);
    auto [it, inserted] = pending_.try_emplace(request_id);
    if (!inserted) {
      throw Error(ErrorCode::kProtocol, "request id " + std::to_string(request_id) +
                                            " is already in flight");
    }
    future = it->second.get_future();
  }
  try {
    channel_->write_line(encode(ScoreRequest{request_id, {prefix.begin(), prefix.end()}}));
  } catch (const Error&) {
    std::lock_guard lock(mu_);
    pending_.erase(request_id);
    throw;
  }
  return future;
}

LogitVector RemoteScorer::remote_score(std::span<const TokenId> prefix,
                                       std::int64_t request_id) const {
  auto future = submit(prefix, request_id);
  if (future.wait_for(std::chrono::milliseconds(timeout_ms_)) != std::future_status::ready) {
    std::lock_guard lock(mu_);
    // The reader may have completed the promise after the wait expired.
    if (future.wait_for(std::chrono::seconds(0)) != std::future_status::ready) {
      pending_.erase(request_id);
      throw Error(ErrorCode::kTimeout, "request " + std::to_string(request_id) +
                                           " unanswered after " + std::to_string(timeout_ms_) +
                                           " ms");
    }
  }
  return future.get();
}

LogitVector RemoteScorer::score(std::span<const TokenId> prefix) const {
  return remote_score(prefix, next_id_.fetch_add(1));
}

}  // namespace delta::remote
