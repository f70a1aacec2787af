#pragma once

#include <atomic>
#include <cstdint>
#include <list>
#include <mutex>
#include <string>
#include <string_view>
#include <thread>

#include "delta/remote/transport.h"
#include "delta/scorer.h"

namespace delta::remote {

struct StubOptions {
  // Reply with the topk/rest form whenever it is exact and smaller.
  bool allow_sparse = false;
};

// Answers one request frame on behalf of a local scorer. Malformed frames,
// out-of-range tokens and scorer failures produce an error frame; the
// returned string has no trailing newline.
std::string stub_server_step(const Scorer& model, std::string_view request_line,
                             const StubOptions& options = {});

// Sends hello, then answers requests until the peer closes the channel.
void serve_channel(const Scorer& model, LineChannel& channel, const StubOptions& options = {},
                   const std::atomic<bool>* stop = nullptr);

// Serves protocol v1 on stdin/stdout until end of input.
void serve_stdio(const Scorer& model, const StubOptions& options = {});

// Threaded TCP server; one thread per connection. Port 0 binds an ephemeral
// port, readable through port().
class TcpStubServer {
 public:
  TcpStubServer(const Scorer& model, std::uint16_t port, StubOptions options = {},
                const std::string& bind_address = "127.0.0.1");
  ~TcpStubServer();

  TcpStubServer(const TcpStubServer&) = delete;
  TcpStubServer& operator=(const TcpStubServer&) = delete;

  std::uint16_t port() const noexcept { return port_; }
  void stop();
  // Blocks until stop() is called from another thread.
  void wait();

 private:
  void accept_loop();

  const Scorer& model_;
  StubOptions options_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> stop_{false};
  std::thread acceptor_;
  std::mutex mu_;
  std::list<std::thread> workers_;
};

}  // namespace delta::remote
