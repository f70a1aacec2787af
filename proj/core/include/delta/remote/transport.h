#pragma once

#include <cstdint>
#include <mutex>
#include <string>
#include <sys/types.h>
#include <vector>

namespace delta::remote {

// Line-oriented duplex channel over POSIX file descriptors. Writes are
// serialized internally; reads must come from a single thread.
class LineChannel {
 public:
  enum class ReadStatus { kLine, kTimeout, kClosed };

  // Takes ownership of the descriptors (read_fd may equal write_fd).
  LineChannel(int read_fd, int write_fd, bool owns = true);
  ~LineChannel();

  LineChannel(const LineChannel&) = delete;
  LineChannel& operator=(const LineChannel&) = delete;

  // Reads one line without its terminator. timeout_ms < 0 blocks.
  ReadStatus read_line(std::string& line, int timeout_ms);
  // Appends '\n' and writes the whole frame atomically with respect to
  // other writers. Throws kConnection on failure.
  void write_line(const std::string& line);
  // Half-closes the write side (sockets) so the peer sees end-of-stream.
  void shutdown();

 private:
  int read_fd_;
  int write_fd_;
  bool owns_;
  bool write_is_socket_ = false;
  std::string buffer_;
  std::mutex write_mu_;
};

// Connects to host:port over TCP. Throws kConnection.
int connect_tcp(const std::string& host, std::uint16_t port, int timeout_ms);

// A child process whose stdin/stdout are bound to one end of a socket pair.
class Subprocess {
 public:
  explicit Subprocess(const std::vector<std::string>& argv);
  ~Subprocess();

  Subprocess(const Subprocess&) = delete;
  Subprocess& operator=(const Subprocess&) = delete;

  // Descriptor connected to the child's stdio; ownership is transferred.
  int release_fd();
  pid_t pid() const noexcept { return pid_; }

 private:
  pid_t pid_ = -1;
  int fd_ = -1;
};

}  // namespace delta::remote
