// SPDX-License-Identifier: Apache-2.0
#pragma once

// Browser-compatible framing for the monitor port. After the HTTP upgrade,
// each WireMessage payload travels as one WebSocket message: JSON payloads
// as text, FRAME payloads as binary. No length prefix is used inside.

#include <chrono>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "sentinel/net.hpp"

namespace sentinel {

// Sec-WebSocket-Accept value for a client's Sec-WebSocket-Key.
std::string websocket_accept_key(std::string_view client_key);

// True when `prefix` (the first bytes a client sent) starts an HTTP GET.
bool looks_like_http(std::span<const std::uint8_t> prefix);

class WebSocketChannel final : public MessageChannel {
 public:
  // Server side: reads the upgrade request from `socket` and answers it.
  // Throws ProtocolError("handshake") on a bad request.
  static std::unique_ptr<WebSocketChannel> accept(Socket socket, std::string peer = {});
  // Client side (tests, tools): performs the upgrade against host/path.
  static std::unique_ptr<WebSocketChannel> connect(Socket socket, const std::string& host,
                                                   const std::string& path = "/");

  void send(const Message& msg) override;
  std::optional<Message> receive(std::chrono::milliseconds timeout) override;
  void shutdown() override { socket_.shutdown(); }
  std::string describe() const override { return peer_; }

  // Sends a close frame; the peer is expected to answer and disconnect.
  void close(std::uint16_t code = 1000);

 private:
  WebSocketChannel(Socket socket, std::string peer, bool client);

  void send_frame(std::uint8_t opcode, std::span<const std::uint8_t> payload);
  bool fill(std::size_t n, std::chrono::steady_clock::time_point deadline, bool bounded);

  Socket socket_;
  std::string peer_;
  bool client_;
  std::mutex send_mu_;
  std::vector<std::uint8_t> in_;
  std::vector<std::uint8_t> partial_;
  std::uint8_t partial_opcode_ = 0;
  std::uint32_t mask_state_ = 0x9e3779b9u;
};

}  // namespace sentinel
