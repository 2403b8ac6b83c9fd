// SPDX-License-Identifier: Apache-2.0
#pragma once

// Wire protocol shared by nodes, the gateway and monitors.
//
//   u32 big-endian payload length | payload
//
// A payload is either a JSON object {"type", "protocol_version", "body"} or,
// for FRAME, the byte 0x01 followed by the binary frame layout:
//
//   u16 node_id length | node_id | u64 sequence | i64 timestamp_ms |
//   u32 width | u32 height | u8 channels | pixels
//
// (integers little-endian).

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "sentinel/detection.hpp"
#include "sentinel/frame.hpp"

namespace sentinel {

inline constexpr int kProtocolVersion = 1;
inline constexpr std::size_t kMaxPayload = 16u * 1024u * 1024u;
inline constexpr std::uint8_t kBinaryMarker = 0x01;

enum class MessageType {
  node_hello,
  frame,
  heartbeat,
  auth_request,
  auth_response,
  subscribe,
  set_interval,
  sighting_batch,
  alert,
  status_update,
  error,
};

inline constexpr std::array kAllMessageTypes{
    MessageType::node_hello,    MessageType::frame,        MessageType::heartbeat,      MessageType::auth_request,
    MessageType::auth_response, MessageType::subscribe,    MessageType::set_interval,   MessageType::sighting_batch,
    MessageType::alert,         MessageType::status_update, MessageType::error,
};

std::string_view to_string(MessageType type);
std::optional<MessageType> parse_message_type(std::string_view name);

struct Message {
  MessageType type = MessageType::error;
  nlohmann::json body = nlohmann::json::object();  // unused for FRAME
  Frame frame;                                     // FRAME only

  bool operator==(const Message&) const = default;
};

// Error codes carried in ERROR bodies and ProtocolError.
namespace error_code {
inline constexpr const char* kMalformed = "malformed";
inline constexpr const char* kOversize = "oversize";
inline constexpr const char* kVersion = "version";
inline constexpr const char* kUnknownType = "unknown_type";
inline constexpr const char* kHandshake = "handshake";
inline constexpr const char* kUnauthenticated = "unauthenticated";
inline constexpr const char* kNotFound = "not_found";
inline constexpr const char* kBadRequest = "bad_request";
}  // namespace error_code

std::vector<std::uint8_t> encode_frame(const Frame& frame);
// Throws ProtocolError("malformed") on truncation, trailing bytes or an
// invalid frame.
Frame decode_frame(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_payload(const Message& msg);
// Adds the length prefix. Throws ProtocolError("oversize") past kMaxPayload.
std::vector<std::uint8_t> encode_message(const Message& msg);
// Throws ProtocolError with code malformed / version / unknown_type.
Message decode_payload(std::span<const std::uint8_t> payload);

// Incremental decoder for a byte stream. Malformed input poisons it: every
// later call rethrows the first error.
class StreamDecoder {
 public:
  void feed(std::span<const std::uint8_t> bytes);
  // Next complete message, if any. Throws ProtocolError.
  std::optional<Message> next();
  std::size_t buffered() const { return buffer_.size() - offset_; }

 private:
  std::vector<std::uint8_t> buffer_;
  std::size_t offset_ = 0;
  std::optional<std::pair<std::string, std::string>> failure_;  // code, message
};

// Body builders. Keeping them here keeps field names in one place.
struct SightingEvent {
  std::string identity_id;
  std::string display_name;
  double distance = 0.0;
  double confidence = 0.0;
  BoundingBox box;
  std::string node_id;
  std::int64_t timestamp_ms = 0;
  std::uint64_t frame_sequence = 0;
  bool is_guest = false;
  bool guest_enrolled = false;  // this sighting created the guest record
  std::string status = "neutral";
  std::string crop_path;

  bool operator==(const SightingEvent&) const = default;
};

void to_json(nlohmann::json& j, const SightingEvent& e);
void from_json(const nlohmann::json& j, SightingEvent& e);

Message make_message(MessageType type, nlohmann::json body = nlohmann::json::object());
Message make_frame_message(Frame frame);
Message make_error(std::string_view code, std::string_view text);

}  // namespace sentinel
