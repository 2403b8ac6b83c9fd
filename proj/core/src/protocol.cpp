// SPDX-License-Identifier: Apache-2.0
#include "sentinel/protocol.hpp"

#include <algorithm>
#include <cstring>

#include "sentinel/errors.hpp"

namespace sentinel {

namespace {

constexpr std::array<std::string_view, 11> kNames{
    "NODE_HELLO",     "FRAME", "HEARTBEAT",     "AUTH_REQUEST", "AUTH_RESPONSE", "SUBSCRIBE",
    "SET_INTERVAL", "SIGHTING_BATCH", "ALERT", "STATUS_UPDATE", "ERROR",
};

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  auto v = static_cast<std::make_unsigned_t<T>>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    v = static_cast<decltype(v)>(v >> 8);
  }
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
  T le() {
    need(sizeof(T));
    std::make_unsigned_t<T> v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v = static_cast<decltype(v)>(v | (static_cast<decltype(v)>(bytes_[pos_ + i]) << (8 * i)));
    }
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }

  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw ProtocolError(error_code::kMalformed, "frame payload is truncated");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

void put_length(std::vector<std::uint8_t>& out, std::size_t n) {
  out.push_back(static_cast<std::uint8_t>((n >> 24) & 0xff));
  out.push_back(static_cast<std::uint8_t>((n >> 16) & 0xff));
  out.push_back(static_cast<std::uint8_t>((n >> 8) & 0xff));
  out.push_back(static_cast<std::uint8_t>(n & 0xff));
}

}  // namespace

std::string_view to_string(MessageType type) { return kNames.at(static_cast<std::size_t>(type)); }

std::optional<MessageType> parse_message_type(std::string_view name) {
  for (std::size_t i = 0; i < kNames.size(); ++i) {
    if (kNames[i] == name) return static_cast<MessageType>(i);
  }
  return std::nullopt;
}

std::vector<std::uint8_t> encode_frame(const Frame& frame) {
  frame.validate();
  if (frame.node_id.size() > 0xffff) throw ContractViolation("node_id longer than 65535 bytes");
  std::vector<std::uint8_t> out;
  out.reserve(2 + frame.node_id.size() + 25 + frame.pixels.size());
  put_le(out, static_cast<std::uint16_t>(frame.node_id.size()));
  out.insert(out.end(), frame.node_id.begin(), frame.node_id.end());
  put_le(out, frame.sequence);
  put_le(out, frame.timestamp_ms);
  put_le(out, frame.width);
  put_le(out, frame.height);
  out.push_back(frame.channels);
  out.insert(out.end(), frame.pixels.begin(), frame.pixels.end());
  return out;
}

Frame decode_frame(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  Frame f;
  const auto id_len = r.le<std::uint16_t>();
  const auto id = r.take(id_len);
  f.node_id.assign(id.begin(), id.end());
  f.sequence = r.le<std::uint64_t>();
  f.timestamp_ms = r.le<std::int64_t>();
  f.width = r.le<std::uint32_t>();
  f.height = r.le<std::uint32_t>();
  f.channels = r.le<std::uint8_t>();
  if (f.channels != 1 && f.channels != 3) throw ProtocolError(error_code::kMalformed, "channels must be 1 or 3");
  const std::uint64_t expected = static_cast<std::uint64_t>(f.width) * f.height * f.channels;
  if (expected != r.remaining()) {
    throw ProtocolError(error_code::kMalformed, "pixel buffer has " + std::to_string(r.remaining()) +
                                                    " bytes, header implies " + std::to_string(expected));
  }
  const auto px = r.take(static_cast<std::size_t>(expected));
  f.pixels.assign(px.begin(), px.end());
  return f;
}

std::vector<std::uint8_t> encode_payload(const Message& msg) {
  if (msg.type == MessageType::frame) {
    std::vector<std::uint8_t> out{kBinaryMarker};
    const auto body = encode_frame(msg.frame);
    out.insert(out.end(), body.begin(), body.end());
    return out;
  }
  const nlohmann::json doc{{"type", to_string(msg.type)}, {"protocol_version", kProtocolVersion}, {"body", msg.body}};
  const std::string text = doc.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
  return {text.begin(), text.end()};
}

std::vector<std::uint8_t> encode_message(const Message& msg) {
  const auto payload = encode_payload(msg);
  if (payload.size() > kMaxPayload) {
    throw ProtocolError(error_code::kOversize, "payload of " + std::to_string(payload.size()) + " bytes exceeds limit");
  }
  std::vector<std::uint8_t> out;
  out.reserve(4 + payload.size());
  put_length(out, payload.size());
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

Message decode_payload(std::span<const std::uint8_t> payload) {
  if (payload.empty()) throw ProtocolError(error_code::kMalformed, "empty payload");
  if (payload.size() > kMaxPayload) throw ProtocolError(error_code::kOversize, "payload exceeds limit");
  if (payload[0] == kBinaryMarker) {
    Message m;
    m.type = MessageType::frame;
    m.frame = decode_frame(payload.subspan(1));
    return m;
  }
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(payload.begin(), payload.end());
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(error_code::kMalformed, std::string("payload is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ProtocolError(error_code::kMalformed, "payload must be an object");
  const auto version = doc.find("protocol_version");
  if (version == doc.end() || !version->is_number_integer()) {
    throw ProtocolError(error_code::kMalformed, "missing protocol_version");
  }
  if (version->get<std::int64_t>() != kProtocolVersion) {
    throw ProtocolError(error_code::kVersion, "unsupported protocol_version " + version->dump());
  }
  const auto type = doc.find("type");
  if (type == doc.end() || !type->is_string()) throw ProtocolError(error_code::kMalformed, "missing type");
  const auto parsed = parse_message_type(type->get<std::string>());
  if (!parsed) throw ProtocolError(error_code::kUnknownType, "unknown message type " + type->dump());
  if (*parsed == MessageType::frame) throw ProtocolError(error_code::kMalformed, "FRAME must use the binary form");
  Message m;
  m.type = *parsed;
  const auto body = doc.find("body");
  if (body != doc.end()) {
    if (!body->is_object()) throw ProtocolError(error_code::kMalformed, "body must be an object");
    m.body = *body;
  }
  return m;
}

void StreamDecoder::feed(std::span<const std::uint8_t> bytes) {
  if (offset_ > 0 && offset_ == buffer_.size()) {
    buffer_.clear();
    offset_ = 0;
  }
  buffer_.insert(buffer_.end(), bytes.begin(), bytes.end());
}

std::optional<Message> StreamDecoder::next() {
  if (failure_) throw ProtocolError(failure_->first, failure_->second);
  if (buffered() < 4) return std::nullopt;
  const std::uint8_t* p = buffer_.data() + offset_;
  const std::size_t len = (std::size_t{p[0]} << 24) | (std::size_t{p[1]} << 16) | (std::size_t{p[2]} << 8) | p[3];
  try {
    if (len > kMaxPayload) {
      throw ProtocolError(error_code::kOversize, "declared payload of " + std::to_string(len) + " bytes exceeds limit");
    }
    if (buffered() < 4 + len) return std::nullopt;
    Message m = decode_payload(std::span<const std::uint8_t>(p + 4, len));
    offset_ += 4 + len;
    if (offset_ > (1u << 20) && offset_ * 2 > buffer_.size()) {
      buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(offset_));
      offset_ = 0;
    }
    return m;
  } catch (const ProtocolError& e) {
    failure_ = {e.code(), e.what()};
    throw;
  }
}

void to_json(nlohmann::json& j, const SightingEvent& e) {
  j = nlohmann::json{{"identity_id", e.identity_id},
                     {"display_name", e.display_name},
                     {"distance", e.distance},
                     {"confidence", e.confidence},
                     {"box", e.box},
                     {"node_id", e.node_id},
                     {"timestamp", e.timestamp_ms},
                     {"frame_sequence", e.frame_sequence},
                     {"is_guest", e.is_guest},
                     {"guest_enrolled", e.guest_enrolled},
                     {"status", e.status}};
  if (!e.crop_path.empty()) j["crop_path"] = e.crop_path;
}

void from_json(const nlohmann::json& j, SightingEvent& e) {
  e.identity_id = j.at("identity_id").get<std::string>();
  e.display_name = j.value("display_name", "");
  e.distance = j.at("distance").get<double>();
  e.confidence = j.at("confidence").get<double>();
  e.box = j.at("box").get<BoundingBox>();
  e.node_id = j.at("node_id").get<std::string>();
  e.timestamp_ms = j.at("timestamp").get<std::int64_t>();
  e.frame_sequence = j.at("frame_sequence").get<std::uint64_t>();
  e.is_guest = j.value("is_guest", false);
  e.guest_enrolled = j.value("guest_enrolled", false);
  e.status = j.value("status", "neutral");
  e.crop_path = j.value("crop_path", "");
}

Message make_message(MessageType type, nlohmann::json body) {
  Message m;
  m.type = type;
  m.body = std::move(body);
  return m;
}

Message make_frame_message(Frame frame) {
  Message m;
  m.type = MessageType::frame;
  m.frame = std::move(frame);
  return m;
}

Message make_error(std::string_view code, std::string_view text) {
  return make_message(MessageType::error, {{"code", code}, {"message", text}});
}

}  // namespace sentinel
