#pragma once

#include <algorithm>
#include <array>
#include <cerrno>
#include <chrono>
#include <csignal>
#include <cstdint>
#include <cstring>
#include <memory>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <netdb.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include "strokeopt/errors.hpp"
#include "strokeopt/protocol.hpp"

namespace strokeopt {

// Blocking byte stream carrying sidecar frames.
class Stream {
 public:
  virtual ~Stream() = default;
  virtual void write_all(std::span<const std::uint8_t> bytes) = 0;
  virtual void read_exact(std::span<std::uint8_t> bytes) = 0;
};

// Stream over a connected socket file descriptor (TCP or a socketpair end). Owns the fd.
class SocketStream final : public Stream {
 public:
  explicit SocketStream(int fd) : fd_(fd) {}
  SocketStream(const SocketStream&) = delete;
  SocketStream& operator=(const SocketStream&) = delete;
  ~SocketStream() override { close(); }

  void write_all(std::span<const std::uint8_t> bytes) override {
    std::size_t done = 0;
    while (done < bytes.size()) {
      const ssize_t n = ::send(fd_, bytes.data() + done, bytes.size() - done, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw TransportError(std::string("sidecar write failed: ") + std::strerror(errno));
      }
      done += static_cast<std::size_t>(n);
    }
  }

  void read_exact(std::span<std::uint8_t> bytes) override {
    std::size_t done = 0;
    while (done < bytes.size()) {
      const ssize_t n = ::recv(fd_, bytes.data() + done, bytes.size() - done, 0);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw TransportError(std::string("sidecar read failed: ") + std::strerror(errno));
      }
      if (n == 0) throw TransportError("sidecar closed the connection");
      done += static_cast<std::size_t>(n);
    }
  }

  void close() {
    if (fd_ >= 0) {
      ::close(fd_);
      fd_ = -1;
    }
  }

 private:
  int fd_ = -1;
};

// In-memory stream for tests: reads come from a preloaded buffer, writes are captured.
class MemoryStream final : public Stream {
 public:
  explicit MemoryStream(std::vector<std::uint8_t> input = {}) : input_(std::move(input)) {}

  void write_all(std::span<const std::uint8_t> bytes) override {
    written_.insert(written_.end(), bytes.begin(), bytes.end());
  }
  void read_exact(std::span<std::uint8_t> bytes) override {
    if (input_.size() - pos_ < bytes.size()) throw TransportError("unexpected end of stream");
    std::copy_n(input_.begin() + static_cast<std::ptrdiff_t>(pos_), bytes.size(), bytes.begin());
    pos_ += bytes.size();
  }

  void append_input(std::span<const std::uint8_t> bytes) {
    input_.insert(input_.end(), bytes.begin(), bytes.end());
  }
  const std::vector<std::uint8_t>& written() const { return written_; }

 private:
  std::vector<std::uint8_t> input_;
  std::size_t pos_ = 0;
  std::vector<std::uint8_t> written_;
};

inline void write_frame(Stream& s, wire::MsgType type, std::span<const std::uint8_t> payload) {
  s.write_all(wire::encode_frame(type, payload));
}

inline wire::Frame read_frame(Stream& s) {
  std::array<std::uint8_t, wire::kHeaderSize> header{};
  s.read_exact(header);
  const auto h = wire::decode_header(header);
  wire::Frame f{h.type, wire::Bytes(h.payload_len)};
  s.read_exact(f.payload);
  return f;
}

// A child process whose stdin and stdout are both connected to one socket.
class ChildProcess {
 public:
  ChildProcess() = default;
  explicit ChildProcess(pid_t pid) : pid_(pid) {}
  ChildProcess(ChildProcess&& o) noexcept : pid_(std::exchange(o.pid_, -1)) {}
  ChildProcess& operator=(ChildProcess&& o) noexcept {
    if (this != &o) {
      wait();
      pid_ = std::exchange(o.pid_, -1);
    }
    return *this;
  }
  ~ChildProcess() { wait(); }

  pid_t pid() const { return pid_; }

  // Reaps the child, escalating to SIGKILL if it has not exited within the grace period.
  int wait(std::chrono::milliseconds grace = std::chrono::milliseconds(3000)) {
    if (pid_ <= 0) return -1;
    int status = 0;
    const auto deadline = std::chrono::steady_clock::now() + grace;
    while (true) {
      const pid_t r = ::waitpid(pid_, &status, WNOHANG);
      if (r == pid_ || (r < 0 && errno != EINTR)) break;
      if (std::chrono::steady_clock::now() >= deadline) {
        ::kill(pid_, SIGKILL);
        ::waitpid(pid_, &status, 0);
        break;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    pid_ = -1;
    return status;
  }

 private:
  pid_t pid_ = -1;
};

struct SpawnedStream {
  std::unique_ptr<Stream> stream;
  ChildProcess child;
};

// Runs `/bin/sh -c command` with its stdin/stdout wired to a fresh socketpair.
inline SpawnedStream spawn_command(const std::string& command) {
  int fds[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, fds) != 0) {
    throw TransportError(std::string("socketpair failed: ") + std::strerror(errno));
  }
  const pid_t pid = ::fork();
  if (pid < 0) {
    ::close(fds[0]);
    ::close(fds[1]);
    throw TransportError(std::string("fork failed: ") + std::strerror(errno));
  }
  if (pid == 0) {
    ::dup2(fds[1], STDIN_FILENO);
    ::dup2(fds[1], STDOUT_FILENO);
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(fds[1]);
  return {std::make_unique<SocketStream>(fds[0]), ChildProcess(pid)};
}

inline std::unique_ptr<Stream> connect_tcp(const std::string& host, const std::string& port) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (const int rc = ::getaddrinfo(host.c_str(), port.c_str(), &hints, &res); rc != 0) {
    throw TransportError("cannot resolve " + host + ":" + port + ": " + ::gai_strerror(rc));
  }
  std::unique_ptr<addrinfo, decltype(&::freeaddrinfo)> guard(res, &::freeaddrinfo);
  for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
    const int fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) return std::make_unique<SocketStream>(fd);
    ::close(fd);
  }
  throw TransportError("cannot connect to " + host + ":" + port);
}

}  // namespace strokeopt
