// SPDX-License-Identifier: Apache-2.0
#include "sentinel/websocket.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cctype>
#include <sstream>

#include "sentinel/errors.hpp"

namespace sentinel {

namespace {

constexpr std::string_view kGuid = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11";
constexpr std::size_t kMaxHeader = 16 * 1024;

enum Opcode : std::uint8_t { kContinuation = 0x0, kText = 0x1, kBinary = 0x2, kClose = 0x8, kPing = 0x9, kPong = 0xA };

std::string base64(const unsigned char* data, std::size_t n) {
  std::string out(4 * ((n + 2) / 3) + 1, '\0');
  const int len = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), data, static_cast<int>(n));
  out.resize(static_cast<std::size_t>(len));
  return out;
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

// Reads an HTTP header block (up to the blank line) byte by byte, so nothing
// past it is consumed from the socket.
std::string read_http_head(Socket& socket) {
  std::string head;
  std::uint8_t c = 0;
  while (head.size() < kMaxHeader) {
    if (!socket.wait_readable(std::chrono::milliseconds(5000))) {
      throw ProtocolError(error_code::kHandshake, "timed out waiting for the upgrade request");
    }
    if (socket.recv_some(std::span<std::uint8_t>(&c, 1)) == 0) throw ConnectionClosed("closed during handshake");
    head.push_back(static_cast<char>(c));
    if (head.ends_with("\r\n\r\n")) return head;
  }
  throw ProtocolError(error_code::kHandshake, "upgrade request too large");
}

struct HttpHead {
  std::string start_line;
  std::vector<std::pair<std::string, std::string>> headers;  // lower-cased names

  std::string get(std::string_view name) const {
    for (const auto& [k, v] : headers) {
      if (k == name) return v;
    }
    return {};
  }
};

HttpHead parse_head(const std::string& text) {
  HttpHead h;
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  h.start_line = trim(line);
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty()) break;
    const auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    h.headers.emplace_back(lower(trim(line.substr(0, colon))), trim(line.substr(colon + 1)));
  }
  return h;
}

bool has_token(const std::string& value, std::string_view token) {
  std::istringstream in(lower(value));
  std::string part;
  while (std::getline(in, part, ',')) {
    if (trim(part) == token) return true;
  }
  return false;
}

}  // namespace

std::string websocket_accept_key(std::string_view client_key) {
  const std::string input = std::string(client_key) + std::string(kGuid);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(input.data(), input.size(), digest, &len, EVP_sha1(), nullptr) != 1) {
    throw Error("SHA-1 digest failed");
  }
  return base64(digest, len);
}

bool looks_like_http(std::span<const std::uint8_t> prefix) {
  static constexpr std::string_view get = "GET ";
  if (prefix.size() < get.size()) return false;
  return std::equal(get.begin(), get.end(), prefix.begin());
}

WebSocketChannel::WebSocketChannel(Socket socket, std::string peer, bool client)
    : socket_(std::move(socket)), peer_(std::move(peer)), client_(client) {}

std::unique_ptr<WebSocketChannel> WebSocketChannel::accept(Socket socket, std::string peer) {
  const HttpHead req = parse_head(read_http_head(socket));
  auto reject = [&](const std::string& why) {
    const std::string resp = "HTTP/1.1 400 Bad Request\r\nContent-Length: 0\r\nConnection: close\r\n\r\n";
    try {
      socket.send_all(std::span(reinterpret_cast<const std::uint8_t*>(resp.data()), resp.size()));
    } catch (const IoError&) {
    }
    throw ProtocolError(error_code::kHandshake, why);
  };
  if (!req.start_line.starts_with("GET ")) reject("not a GET request");
  if (lower(req.get("upgrade")) != "websocket") reject("missing Upgrade: websocket");
  if (!has_token(req.get("connection"), "upgrade")) reject("missing Connection: Upgrade");
  const std::string key = req.get("sec-websocket-key");
  if (key.empty()) reject("missing Sec-WebSocket-Key");
  if (const auto v = req.get("sec-websocket-version"); !v.empty() && v != "13") reject("unsupported version " + v);

  const std::string resp = "HTTP/1.1 101 Switching Protocols\r\nUpgrade: websocket\r\nConnection: Upgrade\r\n"
                           "Sec-WebSocket-Accept: " + websocket_accept_key(key) + "\r\n\r\n";
  socket.send_all(std::span(reinterpret_cast<const std::uint8_t*>(resp.data()), resp.size()));
  return std::unique_ptr<WebSocketChannel>(new WebSocketChannel(std::move(socket), std::move(peer), false));
}

std::unique_ptr<WebSocketChannel> WebSocketChannel::connect(Socket socket, const std::string& host,
                                                            const std::string& path) {
  const std::string key = "c2VudGluZWwtbW9uaXRvcg==";
  const std::string req = "GET " + path + " HTTP/1.1\r\nHost: " + host +
                          "\r\nUpgrade: websocket\r\nConnection: Upgrade\r\nSec-WebSocket-Key: " + key +
                          "\r\nSec-WebSocket-Version: 13\r\n\r\n";
  socket.send_all(std::span(reinterpret_cast<const std::uint8_t*>(req.data()), req.size()));
  const HttpHead resp = parse_head(read_http_head(socket));
  if (resp.start_line.find(" 101") == std::string::npos) {
    throw ProtocolError(error_code::kHandshake, "server refused upgrade: " + resp.start_line);
  }
  if (resp.get("sec-websocket-accept") != websocket_accept_key(key)) {
    throw ProtocolError(error_code::kHandshake, "bad Sec-WebSocket-Accept");
  }
  return std::unique_ptr<WebSocketChannel>(new WebSocketChannel(std::move(socket), host, true));
}

void WebSocketChannel::send(const Message& msg) {
  const auto payload = encode_payload(msg);
  if (payload.size() > kMaxPayload) throw ProtocolError(error_code::kOversize, "payload exceeds limit");
  send_frame(msg.type == MessageType::frame ? kBinary : kText, payload);
}

void WebSocketChannel::close(std::uint16_t code) {
  const std::uint8_t body[2] = {static_cast<std::uint8_t>(code >> 8), static_cast<std::uint8_t>(code & 0xff)};
  send_frame(kClose, body);
}

void WebSocketChannel::send_frame(std::uint8_t opcode, std::span<const std::uint8_t> payload) {
  std::vector<std::uint8_t> out;
  out.reserve(payload.size() + 14);
  out.push_back(static_cast<std::uint8_t>(0x80 | opcode));
  const std::uint8_t mask_bit = client_ ? 0x80 : 0x00;
  const std::size_t n = payload.size();
  if (n < 126) {
    out.push_back(static_cast<std::uint8_t>(mask_bit | n));
  } else if (n <= 0xffff) {
    out.push_back(mask_bit | 126);
    out.push_back(static_cast<std::uint8_t>(n >> 8));
    out.push_back(static_cast<std::uint8_t>(n & 0xff));
  } else {
    out.push_back(mask_bit | 127);
    for (int i = 7; i >= 0; --i) out.push_back(static_cast<std::uint8_t>((static_cast<std::uint64_t>(n) >> (8 * i)) & 0xff));
  }
  std::lock_guard lock(send_mu_);
  if (client_) {
    mask_state_ = mask_state_ * 1664525u + 1013904223u;
    const std::uint8_t mask[4] = {static_cast<std::uint8_t>(mask_state_ >> 24), static_cast<std::uint8_t>(mask_state_ >> 16),
                                  static_cast<std::uint8_t>(mask_state_ >> 8), static_cast<std::uint8_t>(mask_state_)};
    out.insert(out.end(), mask, mask + 4);
    for (std::size_t i = 0; i < n; ++i) out.push_back(payload[i] ^ mask[i % 4]);
  } else {
    out.insert(out.end(), payload.begin(), payload.end());
  }
  socket_.send_all(out);
}

bool WebSocketChannel::fill(std::size_t n, std::chrono::steady_clock::time_point deadline, bool bounded) {
  std::uint8_t buf[64 * 1024];
  while (in_.size() < n) {
    if (bounded) {
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (left.count() < 0 || !socket_.wait_readable(left)) return false;
    }
    const std::size_t got = socket_.recv_some(buf);
    if (got == 0) throw ConnectionClosed("peer closed the connection");
    in_.insert(in_.end(), buf, buf + got);
  }
  return true;
}

std::optional<Message> WebSocketChannel::receive(std::chrono::milliseconds timeout) {
  const bool bounded = timeout.count() >= 0;
  const auto deadline = std::chrono::steady_clock::now() + (bounded ? timeout : std::chrono::milliseconds(0));
  for (;;) {
    if (!fill(2, deadline, bounded)) return std::nullopt;
    const bool fin = (in_[0] & 0x80) != 0;
    const std::uint8_t opcode = in_[0] & 0x0f;
    if ((in_[0] & 0x70) != 0) throw ProtocolError(error_code::kMalformed, "reserved WebSocket bits set");
    const bool masked = (in_[1] & 0x80) != 0;
    if (!client_ && !masked) throw ProtocolError(error_code::kMalformed, "client frames must be masked");
    std::uint64_t len = in_[1] & 0x7f;
    std::size_t header = 2;
    if (len == 126) {
      if (!fill(4, deadline, bounded)) return std::nullopt;
      len = (std::uint64_t{in_[2]} << 8) | in_[3];
      header = 4;
    } else if (len == 127) {
      if (!fill(10, deadline, bounded)) return std::nullopt;
      len = 0;
      for (int i = 0; i < 8; ++i) len = (len << 8) | in_[2 + static_cast<std::size_t>(i)];
      header = 10;
    }
    if (len > kMaxPayload || partial_.size() + len > kMaxPayload) {
      throw ProtocolError(error_code::kOversize, "WebSocket message exceeds limit");
    }
    const std::size_t mask_at = header;
    if (masked) header += 4;
    const std::size_t total = header + static_cast<std::size_t>(len);
    if (!fill(total, deadline, bounded)) return std::nullopt;

    std::vector<std::uint8_t> payload(in_.begin() + static_cast<std::ptrdiff_t>(header),
                                      in_.begin() + static_cast<std::ptrdiff_t>(total));
    if (masked) {
      for (std::size_t i = 0; i < payload.size(); ++i) payload[i] ^= in_[mask_at + i % 4];
    }
    in_.erase(in_.begin(), in_.begin() + static_cast<std::ptrdiff_t>(total));

    switch (opcode) {
      case kPing:
        send_frame(kPong, payload);
        continue;
      case kPong:
        continue;
      case kClose:
        try {
          send_frame(kClose, std::span(payload).first(std::min<std::size_t>(payload.size(), 2)));
        } catch (const IoError&) {
        }
        throw ConnectionClosed("WebSocket closed by peer");
      case kText:
      case kBinary:
        if (!partial_.empty() || partial_opcode_ != 0) {
          throw ProtocolError(error_code::kMalformed, "new message inside a fragmented one");
        }
        if (fin) return decode_payload(payload);
        partial_opcode_ = opcode;
        partial_ = std::move(payload);
        continue;
      case kContinuation:
        if (partial_opcode_ == 0) throw ProtocolError(error_code::kMalformed, "unexpected continuation frame");
        partial_.insert(partial_.end(), payload.begin(), payload.end());
        if (fin) {
          auto whole = std::move(partial_);
          partial_.clear();
          partial_opcode_ = 0;
          return decode_payload(whole);
        }
        continue;
      default:
        throw ProtocolError(error_code::kMalformed, "unknown WebSocket opcode");
    }
  }
}

}  // namespace sentinel
