#include "delta/remote/stub_server.h"

#include <arpa/inet.h>
#include <cerrno>
#include <cstring>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <json.hpp>

#include "delta/error.h"
#include "delta/remote/protocol.h"

namespace delta::remote {
namespace {

// Best-effort id recovery so that error frames can name the request.
std::optional<std::int64_t> sniff_id(std::string_view line) {
  auto j = nlohmann::json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return std::nullopt;
  auto it = j.find("id");
  if (it == j.end() || !it->is_number_integer()) return std::nullopt;
  return it->get<std::int64_t>();
}

}  // namespace

std::string stub_server_step(const Scorer& model, std::string_view request_line,
                             const StubOptions& options) {
  ScoreRequest req;
  try {
    req = parse_score_request(request_line);
  } catch (const Error& e) {
    return encode(ErrorFrame{sniff_id(request_line), e.what()});
  }
  const std::size_t v = model.vocab_size();
  for (TokenId t : req.tokens) {
    if (static_cast<std::size_t>(t) >= v) {
      return encode(ErrorFrame{req.id, "token id " + std::to_string(t) +
                                           " outside vocabulary of size " + std::to_string(v)});
    }
  }
  try {
    LogitVector logits = model.score(req.tokens);
    if (options.allow_sparse) {
      if (auto sparse = sparsify(logits)) return encode(LogitsFrame{req.id, std::move(*sparse)});
    }
    return encode(LogitsFrame{req.id, logits.values()});
  } catch (const std::exception& e) {
    return encode(ErrorFrame{req.id, e.what()});
  }
}

void serve_channel(const Scorer& model, LineChannel& channel, const StubOptions& options,
                   const std::atomic<bool>* stop) {
  channel.write_line(
      encode(HelloFrame{kProtocolVersion, static_cast<std::int64_t>(model.vocab_size())}));
  std::string line;
  for (;;) {
    if (stop && stop->load()) return;
    const auto status = channel.read_line(line, stop ? 100 : -1);
    if (status == LineChannel::ReadStatus::kTimeout) continue;
    if (status == LineChannel::ReadStatus::kClosed) return;
    if (line.empty()) continue;
    channel.write_line(stub_server_step(model, line, options));
  }
}

void serve_stdio(const Scorer& model, const StubOptions& options) {
  LineChannel channel(STDIN_FILENO, STDOUT_FILENO, /*owns=*/false);
  try {
    serve_channel(model, channel, options);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kConnection) throw;
  }
}

TcpStubServer::TcpStubServer(const Scorer& model, std::uint16_t port, StubOptions options,
                             const std::string& bind_address)
    : model_(model), options_(options) {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (listen_fd_ < 0) throw Error(ErrorCode::kConnection, std::strerror(errno));
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, bind_address.c_str(), &addr.sin_addr) != 1) {
    ::close(listen_fd_);
    throw Error(ErrorCode::kConnection, "invalid bind address " + bind_address);
  }
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 ||
      ::listen(listen_fd_, 64) != 0) {
    const std::string msg = std::strerror(errno);
    ::close(listen_fd_);
    throw Error(ErrorCode::kConnection, "bind " + bind_address + ":" + std::to_string(port) +
                                            ": " + msg);
  }
  socklen_t len = sizeof(addr);
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  acceptor_ = std::thread([this] { accept_loop(); });
}

TcpStubServer::~TcpStubServer() { stop(); }

void TcpStubServer::accept_loop() {
  while (!stop_) {
    pollfd pfd{listen_fd_, POLLIN, 0};
    if (::poll(&pfd, 1, 100) <= 0) continue;
    const int fd = ::accept4(listen_fd_, nullptr, nullptr, SOCK_CLOEXEC);
    if (fd < 0) continue;
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    std::lock_guard lock(mu_);
    workers_.emplace_back([this, fd] {
      LineChannel channel(fd, fd);
      try {
        serve_channel(model_, channel, options_, &stop_);
      } catch (const Error&) {
        // Peer went away mid-write.
      }
    });
  }
}

void TcpStubServer::stop() {
  if (stop_.exchange(true)) return;
  if (acceptor_.joinable()) acceptor_.join();
  std::list<std::thread> workers;
  {
    std::lock_guard lock(mu_);
    workers.swap(workers_);
  }
  for (auto& w : workers) w.join();
  if (listen_fd_ >= 0) ::close(listen_fd_);
  listen_fd_ = -1;
}

void TcpStubServer::wait() {
  while (!stop_) std::this_thread::sleep_for(std::chrono::milliseconds(100));
}

}  // namespace delta::remote
