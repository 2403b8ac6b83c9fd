// SPDX-License-Identifier: Apache-2.0
#include "sentinel/gateway.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>

#include "sentinel/errors.hpp"
#include "sentinel/image.hpp"

namespace sentinel {

namespace {

constexpr int kMaxSendFailures = 3;

std::string status_name(IdentityStatus s) { return std::string(to_string(s)); }

SightingEvent make_event(const IdentityRecord& rec, const MatchResult& m, const FaceDetection& det,
                         const Frame& frame, bool enrolled) {
  SightingEvent e;
  e.identity_id = rec.id;
  e.display_name = rec.display_name;
  e.distance = m.distance;
  e.confidence = m.confidence;
  e.box = det.box;
  e.node_id = frame.node_id;
  e.timestamp_ms = frame.timestamp_ms;
  e.frame_sequence = frame.sequence;
  e.is_guest = rec.is_guest;
  e.guest_enrolled = enrolled;
  e.status = status_name(rec.status);
  e.crop_path = rec.crop_path;
  return e;
}

// Face crop from an AUTH_REQUEST: {"width", "height", "pixels": [0..255]}.
std::vector<double> crop_from_json(const nlohmann::json& crop, int out_size) {
  const int w = crop.at("width").get<int>();
  const int h = crop.at("height").get<int>();
  const auto px = crop.at("pixels").get<std::vector<int>>();
  if (w <= 0 || h <= 0 || px.size() != static_cast<std::size_t>(w) * static_cast<std::size_t>(h)) {
    throw ContractViolation("face crop dimensions do not match its pixel count");
  }
  GrayImage img(w, h);
  for (std::size_t i = 0; i < px.size(); ++i) img.data[i] = std::clamp(px[i], 0, 255) / 255.0;
  return crop_align(img, BoundingBox{0.0, 0.0, static_cast<double>(w), static_cast<double>(h), 1.0}, out_size);
}

}  // namespace

Gateway::Gateway(GatewayConfig config, EmbedderNetwork embedder, Registry subjects, Registry operators,
                 CascadeScorers scorers, Clock& clock)
    : config_(std::move(config)),
      embedder_(std::move(embedder)),
      scorers_(std::move(scorers)),
      clock_(clock),
      subjects_(std::move(subjects)),
      operators_(std::move(operators)) {
  config_.validate();
  if (embedder_.input_dim() != static_cast<std::size_t>(config_.crop_size * config_.crop_size)) {
    throw ConfigError("embedder input size does not match crop_size^2");
  }
  if (!config_.registry_path.empty()) {
    const auto base = config_.registry_path.has_parent_path() ? config_.registry_path.parent_path()
                                                              : std::filesystem::path(".");
    subjects_.set_crop_directory(base / "guests", base);
  }
  if (!config_.sightings_log_path.empty()) {
    if (config_.sightings_log_path.has_parent_path()) {
      std::filesystem::create_directories(config_.sightings_log_path.parent_path());
    }
    log_.open(config_.sightings_log_path, std::ios::app);
    if (!log_) throw IoError("cannot open sightings log " + config_.sightings_log_path.string());
  }
}

Gateway::~Gateway() = default;

// ---- pipeline --------------------------------------------------------------

std::vector<SightingEvent> Gateway::process_frame(const Frame& frame) {
  frame.validate();
  const auto detections = detect_faces(frame, scorers_, config_.detector);
  std::vector<SightingEvent> events;
  bool registry_changed = false;
  for (const auto& det : detections) {
    try {
      const auto crop = crop_align(frame, det, config_.crop_size);
      const Embedding e = embedder_.embed(crop);
      std::unique_lock lock(registry_mu_);
      const MatchResult m = subjects_.classify(e);
      if (m.is_guest_enrollment) {
        const auto& rec = subjects_.enroll_guest(e, crop, clock_.now_ms());
        spdlog::info("enrolled guest {} from {}#{}", rec.id, frame.node_id, frame.sequence);
        events.push_back(make_event(rec, m, det, frame, true));
      } else {
        registry_changed |= subjects_.reinforce(m, e);
        events.push_back(make_event(subjects_.at(m.identity_id), m, det, frame, false));
        continue;
      }
      registry_changed = true;
    } catch (const Error& err) {
      spdlog::warn("skipping face in {}#{}: {}", frame.node_id, frame.sequence, err.what());
      std::lock_guard lock(stats_mu_);
      ++stats_.face_failures;
    }
  }
  if (registry_changed) save_subjects();

  for (const auto& e : events) {
    nlohmann::json line = e;
    line["kind"] = "sighting";
    append_log(line);
  }
  {
    std::lock_guard lock(stats_mu_);
    ++stats_.frames_processed;
    stats_.sightings += events.size();
    stats_.guests_enrolled += static_cast<std::uint64_t>(
        std::count_if(events.begin(), events.end(), [](const SightingEvent& e) { return e.guest_enrolled; }));
  }
  offer(events);
  for (const auto& e : events) {
    if (e.status == "blacklist") raise_alert(e);
  }
  return events;
}

void Gateway::append_log(const nlohmann::json& line) {
  std::lock_guard lock(log_mu_);
  if (!log_.is_open()) return;
  log_ << line.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
  log_.flush();
}

void Gateway::offer(const std::vector<SightingEvent>& events) {
  if (events.empty()) return;
  std::lock_guard lock(sessions_mu_);
  for (auto& [conn, s] : sessions_) {
    if (!s.authenticated || !s.subscribed) continue;
    s.buffer.insert(s.buffer.end(), events.begin(), events.end());
  }
}

void Gateway::raise_alert(const SightingEvent& event) {
  nlohmann::json line = event;
  line["kind"] = "alert";
  append_log(line);
  {
    std::lock_guard lock(stats_mu_);
    ++stats_.alerts;
  }
  spdlog::warn("ALERT: blacklisted {} ({}) seen by {}", event.identity_id, event.display_name, event.node_id);
  const Message msg = make_message(MessageType::alert, {{"event", event}, {"raised_at", clock_.now_ms()}});
  std::vector<std::function<void()>> teardowns;
  {
    std::lock_guard lock(sessions_mu_);
    std::vector<std::uint64_t> conns;
    for (const auto& [conn, s] : sessions_) {
      if (s.authenticated) conns.push_back(conn);
    }
    for (auto conn : conns) deliver(sessions_.at(conn), msg);
    teardowns.swap(pending_teardowns_);
  }
  for (auto& t : teardowns) t();
}

void Gateway::save_subjects() const {
  if (config_.registry_path.empty()) return;
  std::shared_lock lock(registry_mu_);
  save_registry(subjects_, config_.registry_path);
}

Registry Gateway::subjects() const {
  std::shared_lock lock(registry_mu_);
  return subjects_;
}

// ---- node port -------------------------------------------------------------

NodeAction Gateway::on_node_message(NodeLink& link, const Message& msg, const Sender& reply) {
  const auto now = clock_.now_ms();
  if (!link.hello) {
    if (msg.type != MessageType::node_hello) {
      reply(make_error(error_code::kHandshake, "first message must be NODE_HELLO"));
      return NodeAction::disconnect;
    }
    const auto field = msg.body.find("node_id");
    const std::string id = field != msg.body.end() && field->is_string() ? field->get<std::string>() : "";
    if (id.empty()) {
      reply(make_error(error_code::kBadRequest, "NODE_HELLO needs a node_id"));
      return NodeAction::disconnect;
    }
    link.hello = true;
    link.node_id = id;
    std::uint64_t last = 0;
    {
      std::lock_guard lock(nodes_mu_);
      auto& n = nodes_[id];
      n.node_id = id;
      n.last_seen_ms = now;
      n.alive = true;
      n.connected = true;
      last = n.last_sequence;
    }
    spdlog::info("node {} connected (last sequence {})", id, last);
    reply(make_message(MessageType::node_hello, {{"node_id", id}, {"accepted", true}, {"last_sequence", last}}));
    return NodeAction::keep;
  }

  switch (msg.type) {
    case MessageType::frame: {
      if (msg.frame.node_id != link.node_id) {
        reply(make_error(error_code::kBadRequest, "frame node_id does not match NODE_HELLO"));
        return NodeAction::keep;
      }
      std::lock_guard lock(nodes_mu_);
      auto& n = nodes_[link.node_id];
      n.last_seen_ms = now;
      if (msg.frame.sequence <= n.last_sequence) {
        spdlog::warn("node {}: dropping frame {} (last was {})", link.node_id, msg.frame.sequence, n.last_sequence);
        std::lock_guard slock(stats_mu_);
        ++stats_.frames_out_of_order;
        return NodeAction::keep;
      }
      n.last_sequence = msg.frame.sequence;
      return NodeAction::enqueue;
    }
    case MessageType::heartbeat: {
      std::lock_guard lock(nodes_mu_);
      auto& n = nodes_[link.node_id];
      n.last_seen_ms = now;
      if (!n.alive) spdlog::info("node {} is alive again", link.node_id);
      n.alive = true;
      return NodeAction::barrier;
    }
    case MessageType::node_hello:
      reply(make_error(error_code::kBadRequest, "duplicate NODE_HELLO"));
      return NodeAction::keep;
    default:
      reply(make_error(error_code::kBadRequest, std::string(to_string(msg.type)) + " is not valid on the node port"));
      return NodeAction::keep;
  }
}

Message Gateway::heartbeat_ack(const NodeLink& link, const Message& heartbeat) const {
  nlohmann::json body{{"node_id", link.node_id}, {"ack", true}};
  {
    std::lock_guard lock(nodes_mu_);
    if (const auto it = nodes_.find(link.node_id); it != nodes_.end()) body["last_sequence"] = it->second.last_sequence;
  }
  if (heartbeat.body.contains("nonce")) body["nonce"] = heartbeat.body["nonce"];
  return make_message(MessageType::heartbeat, std::move(body));
}

void Gateway::on_node_disconnect(const NodeLink& link) {
  if (!link.hello) return;
  std::lock_guard lock(nodes_mu_);
  if (const auto it = nodes_.find(link.node_id); it != nodes_.end()) it->second.connected = false;
  spdlog::info("node {} disconnected", link.node_id);
}

std::vector<std::string> Gateway::check_liveness(std::int64_t now_ms) {
  std::vector<std::string> dead;
  const std::int64_t limit = config_.heartbeat_interval_ms * config_.heartbeat_misses;
  std::lock_guard lock(nodes_mu_);
  for (auto& [id, n] : nodes_) {
    if (n.alive && now_ms - n.last_seen_ms > limit) {
      n.alive = false;
      dead.push_back(id);
      spdlog::warn("node {} missed {} heartbeats; marking dead", id, config_.heartbeat_misses);
    }
  }
  return dead;
}

std::optional<NodeStatus> Gateway::node_status(const std::string& node_id) const {
  std::lock_guard lock(nodes_mu_);
  const auto it = nodes_.find(node_id);
  if (it == nodes_.end()) return std::nullopt;
  return it->second;
}

// ---- monitor port ----------------------------------------------------------

std::uint64_t Gateway::open_monitor(Sender send, std::function<void()> teardown) {
  std::lock_guard lock(sessions_mu_);
  const std::uint64_t conn = next_connection_++;
  Session s;
  s.connection = conn;
  s.send = std::move(send);
  s.teardown = std::move(teardown);
  sessions_.emplace(conn, std::move(s));
  return conn;
}

void Gateway::close_monitor(std::uint64_t connection) {
  std::lock_guard lock(sessions_mu_);
  sessions_.erase(connection);
}

std::size_t Gateway::session_count() const {
  std::lock_guard lock(sessions_mu_);
  return sessions_.size();
}

std::optional<std::string> Gateway::session_id(std::uint64_t connection) const {
  std::lock_guard lock(sessions_mu_);
  const auto it = sessions_.find(connection);
  if (it == sessions_.end() || !it->second.authenticated) return std::nullopt;
  return it->second.session_id;
}

bool Gateway::deliver(Session& s, const Message& msg) {
  try {
    s.send(msg);
    s.send_failures = 0;
    return true;
  } catch (const std::exception& e) {
    ++s.send_failures;
    spdlog::warn("send to session {} failed ({}/{}): {}", s.session_id, s.send_failures, kMaxSendFailures, e.what());
    if (s.send_failures >= kMaxSendFailures) drop_session(s.connection);
    return false;
  }
}

// Caller holds sessions_mu_. The teardown hook runs after the lock is released.
void Gateway::drop_session(std::uint64_t connection) {
  const auto it = sessions_.find(connection);
  if (it == sessions_.end()) return;
  spdlog::warn("tearing down session {} after {} failed sends", it->second.session_id, kMaxSendFailures);
  if (it->second.teardown) pending_teardowns_.push_back(std::move(it->second.teardown));
  sessions_.erase(it);
  std::lock_guard lock(stats_mu_);
  ++stats_.sessions_torn_down;
}

void Gateway::on_monitor_message(std::uint64_t connection, const Message& msg) {
  std::vector<std::function<void()>> teardowns;
  {
    std::lock_guard lock(sessions_mu_);
    const auto it = sessions_.find(connection);
    if (it == sessions_.end()) return;
    Session& s = it->second;
    const auto now = clock_.now_ms();

    try {
      handle_monitor_message(s, msg, now);
    } catch (const nlohmann::json::exception& e) {
      if (sessions_.contains(connection)) deliver(s, make_error(error_code::kBadRequest, e.what()));
    }
    teardowns.swap(pending_teardowns_);
  }
  for (auto& t : teardowns) t();
}

// Caller holds sessions_mu_.
void Gateway::handle_monitor_message(Session& s, const Message& msg, std::int64_t now) {
  if (msg.type == MessageType::auth_request) {
    handle_auth(s, msg.body);
  } else if (!s.authenticated) {
    deliver(s, make_error(error_code::kUnauthenticated, "authenticate first"));
  } else {
    switch (msg.type) {
      case MessageType::subscribe: {
        if (msg.body.contains("interval")) {
          const auto v = msg.body["interval"];
          if (!v.is_number_integer() || v.get<std::int64_t>() < 1) {
            deliver(s, make_error(error_code::kBadRequest, "interval must be an integer >= 1"));
            break;
          }
          s.interval_s = v.get<std::int64_t>();
        }
        if (!s.subscribed) {
          s.subscribed = true;
          s.buffer.clear();
        }
        s.next_due_ms = now + s.interval_s * 1000;
        deliver(s, make_message(MessageType::subscribe,
                                {{"ack", true}, {"session_id", s.session_id}, {"interval", s.interval_s}}));
        break;
      }
      case MessageType::set_interval: {
        const auto v = msg.body.value("interval", nlohmann::json());
        if (!v.is_number_integer() || v.get<std::int64_t>() < 1) {
          deliver(s, make_error(error_code::kBadRequest, "interval must be an integer >= 1"));
          break;
        }
        s.interval_s = v.get<std::int64_t>();
        s.next_due_ms = now + s.interval_s * 1000;
        deliver(s, make_message(MessageType::set_interval, {{"ack", true}, {"interval", s.interval_s}}));
        break;
      }
      case MessageType::status_update: {
        const std::string id = msg.body.value("identity_id", "");
        IdentityStatus status{};
        try {
          status = parse_status(msg.body.value("status", ""));
        } catch (const ConfigError& e) {
          deliver(s, make_error(error_code::kBadRequest, e.what()));
          break;
        }
        std::optional<IdentityRecord> updated;
        {
          std::unique_lock rlock(registry_mu_);
          if (subjects_.find(id)) updated = subjects_.set_status(id, status, now);
        }
        if (!updated) {
          deliver(s, make_error(error_code::kNotFound, "no identity with id '" + id + "'"));
          break;
        }
        save_subjects();
        spdlog::info("operator {} set {} to {}", s.operator_id, id, to_string(status));
        const Message echo = make_message(MessageType::status_update, {{"identity_id", updated->id},
                                                                        {"display_name", updated->display_name},
                                                                        {"status", to_string(updated->status)},
                                                                        {"changed_at", updated->status_changed_at},
                                                                        {"by", s.operator_id}});
        std::vector<std::uint64_t> conns;
        for (const auto& [c, other] : sessions_) {
          if (other.authenticated) conns.push_back(c);
        }
        for (auto c : conns) {
          if (const auto o = sessions_.find(c); o != sessions_.end()) deliver(o->second, echo);
        }
        break;
      }
      default:
        deliver(s, make_error(error_code::kBadRequest,
                              std::string(to_string(msg.type)) + " is not valid on the monitor port"));
    }
  }
}

void Gateway::handle_auth(Session& s, const nlohmann::json& body) {
  const std::string method = body.value("method", "credentials");
  const IdentityRecord* op = nullptr;
  std::string reason;
  double confidence = 1.0;
  try {
    if (method == "credentials") {
      std::shared_lock rlock(registry_mu_);
      op = operators_.verify_credential(body.value("username", ""), body.value("password", ""));
      if (!op) reason = "invalid username or password";
    } else if (method == "face") {
      const auto crop = crop_from_json(body.at("crop"), config_.crop_size);
      const Embedding e = embedder_.embed(crop);
      std::shared_lock rlock(registry_mu_);
      const MatchResult m = operators_.classify(e);
      confidence = m.confidence;
      if (m.identity_id.empty() || m.confidence < kDefaultGuestThreshold) {
        reason = "face not recognized";
      } else {
        op = operators_.find(m.identity_id);
      }
    } else {
      reason = "unknown method '" + method + "'";
    }
  } catch (const std::exception& e) {
    reason = std::string("bad auth request: ") + e.what();
  }

  if (!op) {
    spdlog::info("authentication failed ({}): {}", method, reason);
    deliver(s, make_message(MessageType::auth_response, {{"ok", false}, {"method", method}, {"reason", reason}}));
    return;
  }
  if (!s.authenticated) s.session_id = "session-" + std::to_string(next_session_++);
  s.authenticated = true;
  s.operator_id = op->id;
  spdlog::info("operator {} authenticated by {} as {}", op->display_name, method, s.session_id);
  deliver(s, make_message(MessageType::auth_response, {{"ok", true},
                                                        {"method", method},
                                                        {"session_id", s.session_id},
                                                        {"operator_id", op->id},
                                                        {"display_name", op->display_name},
                                                        {"confidence", confidence},
                                                        {"interval", s.interval_s}}));
}

std::size_t Gateway::flush_buffers(std::int64_t now_ms) {
  std::size_t sent = 0;
  std::vector<std::function<void()>> teardowns;
  {
    std::lock_guard lock(sessions_mu_);
    std::vector<std::uint64_t> due;
    for (const auto& [conn, s] : sessions_) {
      if (s.authenticated && s.subscribed && now_ms >= s.next_due_ms) due.push_back(conn);
    }
    for (auto conn : due) {
      auto it = sessions_.find(conn);
      if (it == sessions_.end()) continue;
      Session& s = it->second;
      const std::int64_t step = s.interval_s * 1000;
      while (s.next_due_ms <= now_ms) s.next_due_ms += step;
      if (s.buffer.empty()) continue;
      std::stable_sort(s.buffer.begin(), s.buffer.end(), [](const SightingEvent& a, const SightingEvent& b) {
        return a.timestamp_ms < b.timestamp_ms;
      });
      const Message batch = make_message(
          MessageType::sighting_batch, {{"session_id", s.session_id}, {"flushed_at", now_ms}, {"events", s.buffer}});
      if (deliver(s, batch)) {
        s.buffer.clear();
        ++sent;
      }
    }
    teardowns.swap(pending_teardowns_);
  }
  for (auto& t : teardowns) t();
  std::lock_guard lock(stats_mu_);
  stats_.batches_sent += sent;
  return sent;
}

GatewayStats Gateway::stats() const {
  std::lock_guard lock(stats_mu_);
  return stats_;
}

std::vector<nlohmann::json> read_sightings_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<nlohmann::json> lines;
  std::string text;
  std::size_t n = 0;
  while (std::getline(in, text)) {
    ++n;
    if (text.empty()) continue;
    try {
      lines.push_back(nlohmann::json::parse(text));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(n, e.what());
    }
  }
  return lines;
}

}  // namespace sentinel
