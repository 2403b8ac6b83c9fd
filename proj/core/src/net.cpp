// SPDX-License-Identifier: Apache-2.0
#include "sentinel/net.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <cstring>

#include "sentinel/errors.hpp"

namespace sentinel {

namespace {

std::string errno_text(const char* what) { return std::string(what) + ": " + std::strerror(errno); }

}  // namespace

Socket::~Socket() { close(); }

Socket& Socket::operator=(Socket&& other) noexcept {
  if (this != &other) {
    close();
    fd_ = std::exchange(other.fd_, -1);
  }
  return *this;
}

void Socket::send_all(std::span<const std::uint8_t> bytes) {
  if (fd_ < 0) throw ConnectionClosed("socket is closed");
  std::size_t sent = 0;
  while (sent < bytes.size()) {
    const ssize_t n = ::send(fd_, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      if (errno == EPIPE || errno == ECONNRESET) throw ConnectionClosed(errno_text("send"));
      throw IoError(errno_text("send"));
    }
    sent += static_cast<std::size_t>(n);
  }
}

std::size_t Socket::recv_some(std::span<std::uint8_t> buffer) {
  if (fd_ < 0) throw ConnectionClosed("socket is closed");
  for (;;) {
    const ssize_t n = ::recv(fd_, buffer.data(), buffer.size(), 0);
    if (n >= 0) return static_cast<std::size_t>(n);
    if (errno == EINTR) continue;
    if (errno == ECONNRESET) return 0;
    throw IoError(errno_text("recv"));
  }
}

std::size_t Socket::peek(std::span<std::uint8_t> buffer) {
  if (fd_ < 0) throw ConnectionClosed("socket is closed");
  for (;;) {
    const ssize_t n = ::recv(fd_, buffer.data(), buffer.size(), MSG_PEEK);
    if (n >= 0) return static_cast<std::size_t>(n);
    if (errno == EINTR) continue;
    if (errno == ECONNRESET) return 0;
    throw IoError(errno_text("recv"));
  }
}

bool Socket::wait_readable(std::chrono::milliseconds timeout) {
  if (fd_ < 0) return true;
  pollfd p{fd_, POLLIN, 0};
  for (;;) {
    const int rc = ::poll(&p, 1, timeout.count() < 0 ? -1 : static_cast<int>(timeout.count()));
    if (rc < 0 && errno == EINTR) continue;
    if (rc < 0) throw IoError(errno_text("poll"));
    return rc > 0;
  }
}

void Socket::shutdown() {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

void Socket::shutdown_write() {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_WR);
}

void Socket::close() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

Listener Listener::bind(const std::string& address, std::uint16_t port) {
  Listener l;
  const int fd = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (fd < 0) throw IoError(errno_text("socket"));
  l.socket_ = Socket(fd);
  const int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  const std::string host = address.empty() || address == "*" ? "0.0.0.0" : address == "localhost" ? "127.0.0.1" : address;
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) throw IoError("bad listen address " + address);
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0) {
    throw IoError(errno_text(("bind " + host + ":" + std::to_string(port)).c_str()));
  }
  if (::listen(fd, 64) < 0) throw IoError(errno_text("listen"));
  socklen_t len = sizeof(addr);
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  l.port_ = ntohs(addr.sin_port);
  return l;
}

std::optional<Socket> Listener::accept(std::chrono::milliseconds timeout) {
  if (!socket_.valid()) return std::nullopt;
  if (!socket_.wait_readable(timeout)) return std::nullopt;
  const int fd = ::accept4(socket_.fd(), nullptr, nullptr, SOCK_CLOEXEC);
  if (fd < 0) {
    if (errno == EINTR || errno == EAGAIN || errno == ECONNABORTED) return std::nullopt;
    throw IoError(errno_text("accept"));
  }
  const int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  return Socket(fd);
}

Socket connect_tcp(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string service = std::to_string(port);
  if (const int rc = ::getaddrinfo(host.c_str(), service.c_str(), &hints, &res); rc != 0) {
    throw IoError("resolve " + host + ": " + ::gai_strerror(rc));
  }
  std::string last = "no address";
  for (addrinfo* ai = res; ai; ai = ai->ai_next) {
    const int fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol);
    if (fd < 0) continue;
    Socket s(fd);
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) {
      ::freeaddrinfo(res);
      const int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
      return s;
    }
    last = std::strerror(errno);
  }
  ::freeaddrinfo(res);
  throw IoError("connect " + host + ":" + service + ": " + last);
}

std::pair<std::string, std::uint16_t> parse_endpoint(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == text.size()) {
    throw ConfigError("expected host:port, got '" + text + "'");
  }
  unsigned value = 0;
  const char* first = text.data() + colon + 1;
  const char* last = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || value == 0 || value > 65535) {
    throw ConfigError("bad port in '" + text + "'");
  }
  return {text.substr(0, colon), static_cast<std::uint16_t>(value)};
}

FramedChannel::FramedChannel(Socket socket, std::string peer) : socket_(std::move(socket)), peer_(std::move(peer)) {}

void FramedChannel::send(const Message& msg) {
  const auto bytes = encode_message(msg);
  send_raw(bytes);
}

void FramedChannel::send_raw(std::span<const std::uint8_t> bytes) {
  std::lock_guard lock(send_mu_);
  socket_.send_all(bytes);
}

std::optional<Message> FramedChannel::receive(std::chrono::milliseconds timeout) {
  using clock = std::chrono::steady_clock;
  const auto deadline = clock::now() + timeout;
  std::uint8_t buf[64 * 1024];
  for (;;) {
    if (auto m = decoder_.next()) return m;
    if (timeout.count() >= 0) {
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - clock::now());
      if (left.count() < 0 || !socket_.wait_readable(left)) return std::nullopt;
    }
    const std::size_t n = socket_.recv_some(buf);
    if (n == 0) throw ConnectionClosed("peer closed the connection");
    decoder_.feed(std::span<const std::uint8_t>(buf, n));
  }
}

}  // namespace sentinel
