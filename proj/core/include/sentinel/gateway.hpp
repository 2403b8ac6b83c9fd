// SPDX-License-Identifier: Apache-2.0
#pragma once

// The gateway's state machine, independent of sockets and threads: the
// detect -> crop -> embed -> classify pipeline, node handshakes and
// ordering, monitor sessions with interval batching, status updates and
// alerts. The server (server.hpp) wires it to TCP and WebSocket links.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "sentinel/cascade.hpp"
#include "sentinel/clock.hpp"
#include "sentinel/config.hpp"
#include "sentinel/embedder.hpp"
#include "sentinel/protocol.hpp"
#include "sentinel/registry.hpp"

namespace sentinel {

// Delivers one message to a peer. Throwing counts as a send failure.
using Sender = std::function<void(const Message&)>;

struct GatewayStats {
  std::uint64_t frames_processed = 0;
  std::uint64_t frames_out_of_order = 0;
  std::uint64_t sightings = 0;
  std::uint64_t guests_enrolled = 0;
  std::uint64_t alerts = 0;
  std::uint64_t batches_sent = 0;
  std::uint64_t face_failures = 0;
  std::uint64_t sessions_torn_down = 0;
};

struct NodeStatus {
  std::string node_id;
  std::uint64_t last_sequence = 0;
  std::int64_t last_seen_ms = 0;
  bool alive = true;
  bool connected = false;
};

// Per-connection state on the node port.
struct NodeLink {
  std::string node_id;  // empty until NODE_HELLO
  bool hello = false;
};

enum class NodeAction {
  keep,        // nothing for the pipeline
  enqueue,     // the message's frame should go to the pipeline
  barrier,     // a heartbeat: ack once earlier frames are processed
  disconnect,  // close the connection (an ERROR has been sent)
};

class Gateway {
 public:
  Gateway(GatewayConfig config, EmbedderNetwork embedder, Registry subjects, Registry operators,
          CascadeScorers scorers, Clock& clock);
  ~Gateway();

  const GatewayConfig& config() const { return config_; }
  Clock& clock() { return clock_; }

  // ---- pipeline --------------------------------------------------------
  // Detects, embeds and classifies every face in `frame`, enrolling guests,
  // logging each event and alerting on blacklisted identities.
  std::vector<SightingEvent> process_frame(const Frame& frame);

  // ---- node port -------------------------------------------------------
  NodeAction on_node_message(NodeLink& link, const Message& msg, const Sender& reply);
  void on_node_disconnect(const NodeLink& link);
  // Reply for a heartbeat once the frames before it have been processed.
  Message heartbeat_ack(const NodeLink& link, const Message& heartbeat) const;
  // Marks nodes silent for heartbeat_misses intervals as dead (logged once).
  std::vector<std::string> check_liveness(std::int64_t now_ms);
  std::optional<NodeStatus> node_status(const std::string& node_id) const;

  // ---- monitor port ----------------------------------------------------
  // `teardown` is called (once) when the session is dropped after repeated
  // send failures; the server closes the connection there.
  std::uint64_t open_monitor(Sender send, std::function<void()> teardown = {});
  void on_monitor_message(std::uint64_t connection, const Message& msg);
  void close_monitor(std::uint64_t connection);

  // Sends one SIGHTING_BATCH to every subscribed session that is due and has
  // buffered events. Returns the number of batches delivered.
  std::size_t flush_buffers(std::int64_t now_ms);
  void raise_alert(const SightingEvent& event);

  // ---- introspection ---------------------------------------------------
  GatewayStats stats() const;
  Registry subjects() const;
  std::size_t session_count() const;
  std::optional<std::string> session_id(std::uint64_t connection) const;
  // Persists the subject registry to config().registry_path (if set).
  void save_subjects() const;

 private:
  struct Session {
    std::uint64_t connection = 0;
    std::string session_id;
    std::string operator_id;
    bool authenticated = false;
    bool subscribed = false;
    std::int64_t interval_s = 5;
    std::int64_t next_due_ms = 0;
    std::vector<SightingEvent> buffer;
    int send_failures = 0;
    Sender send;
    std::function<void()> teardown;
  };

  void handle_monitor_message(Session& s, const Message& msg, std::int64_t now);
  void handle_auth(Session& s, const nlohmann::json& body);
  void handle_status_update(Session& s, const nlohmann::json& body);
  // Returns false when the session was torn down.
  bool deliver(Session& s, const Message& msg);
  void drop_session(std::uint64_t connection);
  void append_log(const nlohmann::json& line);
  void offer(const std::vector<SightingEvent>& events);

  GatewayConfig config_;
  EmbedderNetwork embedder_;
  CascadeScorers scorers_;
  Clock& clock_;

  mutable std::shared_mutex registry_mu_;
  Registry subjects_;
  Registry operators_;

  mutable std::mutex sessions_mu_;
  std::map<std::uint64_t, Session> sessions_;
  std::uint64_t next_connection_ = 1;
  std::uint64_t next_session_ = 1;
  std::vector<std::function<void()>> pending_teardowns_;

  mutable std::mutex nodes_mu_;
  std::map<std::string, NodeStatus> nodes_;

  std::mutex log_mu_;
  std::ofstream log_;

  mutable std::mutex stats_mu_;
  GatewayStats stats_;
};

// Reads a sightings log back (one JSON object per line).
std::vector<nlohmann::json> read_sightings_log(const std::filesystem::path& path);

}  // namespace sentinel
