// SPDX-License-Identifier: Apache-2.0
#pragma once

// Thin RAII wrappers over POSIX TCP sockets plus a message channel that
// speaks the length-prefixed wire protocol.

#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <utility>

#include "sentinel/protocol.hpp"

namespace sentinel {

class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  ~Socket();
  Socket(Socket&& other) noexcept : fd_(std::exchange(other.fd_, -1)) {}
  Socket& operator=(Socket&& other) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }

  // Throws ConnectionClosed if the peer is gone, IoError otherwise.
  void send_all(std::span<const std::uint8_t> bytes);
  // Returns 0 on orderly shutdown by the peer.
  std::size_t recv_some(std::span<std::uint8_t> buffer);
  std::size_t peek(std::span<std::uint8_t> buffer);
  // Waits until data (or EOF) is readable. Negative timeout waits forever.
  bool wait_readable(std::chrono::milliseconds timeout);
  // Unblocks pending reads in other threads; the descriptor stays open.
  void shutdown();
  // Half-close: the peer reads end-of-stream, replies can still arrive.
  void shutdown_write();
  void close();

 private:
  int fd_ = -1;
};

class Listener {
 public:
  // Port 0 picks an ephemeral port. Throws IoError.
  static Listener bind(const std::string& address, std::uint16_t port);

  std::uint16_t port() const { return port_; }
  std::optional<Socket> accept(std::chrono::milliseconds timeout);
  void close() { socket_.close(); }
  bool valid() const { return socket_.valid(); }

 private:
  Socket socket_;
  std::uint16_t port_ = 0;
};

// Throws IoError when the connection is refused or the name does not resolve.
Socket connect_tcp(const std::string& host, std::uint16_t port);

// "host:port" -> (host, port). Throws ConfigError.
std::pair<std::string, std::uint16_t> parse_endpoint(const std::string& text);

// A bidirectional stream of WireMessages. send() may be called from several
// threads; receive() from one.
class MessageChannel {
 public:
  virtual ~MessageChannel() = default;
  virtual void send(const Message& msg) = 0;
  // Next message, or nullopt once `timeout` passes (negative: wait forever).
  // Throws ConnectionClosed at end of stream, ProtocolError on bad input.
  virtual std::optional<Message> receive(std::chrono::milliseconds timeout = std::chrono::milliseconds(-1)) = 0;
  // Unblocks a pending receive() in another thread.
  virtual void shutdown() = 0;
  virtual std::string describe() const = 0;
};

class FramedChannel final : public MessageChannel {
 public:
  explicit FramedChannel(Socket socket, std::string peer = {});

  void send(const Message& msg) override;
  // Sends raw bytes as-is; used by fuzz tests.
  void send_raw(std::span<const std::uint8_t> bytes);
  std::optional<Message> receive(std::chrono::milliseconds timeout) override;
  void shutdown() override { socket_.shutdown(); }
  void shutdown_write() { socket_.shutdown_write(); }
  std::string describe() const override { return peer_; }

 private:
  Socket socket_;
  std::string peer_;
  std::mutex send_mu_;
  StreamDecoder decoder_;
};

}  // namespace sentinel
