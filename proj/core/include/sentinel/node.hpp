// SPDX-License-Identifier: Apache-2.0
#pragma once

// Sensor node: reads frames from a directory of PNM files or a synthetic
// scene generator and streams them to the gateway.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sentinel/clock.hpp"
#include "sentinel/frame.hpp"
#include "sentinel/image.hpp"
#include "sentinel/synthetic.hpp"

namespace sentinel {

// One image of a source, before it is stamped into a Frame.
struct SourceImage {
  std::string name;  // file name or "synthetic-<n>"
  PnmImage image;
  std::vector<PlantedFace> truth;  // synthetic sources only
};

class FrameSource {
 public:
  virtual ~FrameSource() = default;
  // Next image, or nullopt when the source is exhausted (never for looping
  // sources).
  virtual std::optional<SourceImage> next() = 0;
  virtual std::string describe() const = 0;
};

// Files in lexicographic order. Unreadable files are skipped with a warning.
// Throws ConfigError when the directory is missing or holds no readable
// images.
std::unique_ptr<FrameSource> directory_source(const std::filesystem::path& dir, bool loop);

struct SyntheticSourceOptions {
  std::uint64_t seed = 0;
  // One entry per frame: the identity planted in it, or -1 for an empty
  // scene. Empty: `frames` frames cycling through identities 0..9.
  std::vector<int> schedule;
  std::size_t frames = 20;
  SceneOptions scene;
};

std::unique_ptr<FrameSource> synthetic_source(const SyntheticSourceOptions& options, bool loop);

// Parses "synthetic:<seed>[:<id>,<id>,...]" or a directory path.
std::unique_ptr<FrameSource> open_source(const std::string& source, bool loop);

// Stamps source images with the node id, sequence numbers from 1 and
// timestamps from `clock`.
class FrameStamper {
 public:
  FrameStamper(std::string node_id, Clock& clock) : node_id_(std::move(node_id)), clock_(clock) {}
  Frame stamp(const SourceImage& img);
  std::uint64_t last_sequence() const { return sequence_; }

 private:
  std::string node_id_;
  Clock& clock_;
  std::uint64_t sequence_ = 0;
};

struct NodeConfig {
  std::string node_id;
  std::string gateway_host = "127.0.0.1";
  std::uint16_t gateway_port = 7401;
  std::string source;
  double frame_rate = 5.0;
  bool loop = false;
  int retry_budget = 5;  // consecutive failed connection attempts tolerated
  std::int64_t heartbeat_interval_ms = 5000;
  std::int64_t backoff_initial_ms = 1000;
  std::int64_t backoff_cap_ms = 30000;
  std::int64_t reply_timeout_ms = 10000;  // real time, for handshake and final ack
  std::filesystem::path truth_path;       // ground-truth sidecar for synthetic sources
  std::uint64_t max_frames = 0;           // 0: until the source ends

  // Throws ConfigError (empty id, rate outside (0, 30]).
  void validate() const;
};

struct NodeReport {
  int exit_code = 0;
  std::uint64_t frames_sent = 0;
  std::uint64_t last_sequence = 0;
  int connections = 0;
  std::string error;
};

// Backoff before reconnect attempt `attempt` (1-based): initial * 2^(attempt-1), capped.
std::int64_t backoff_delay_ms(const NodeConfig& config, int attempt);

// Streams `source` to the gateway. Returns exit code 0 after the final
// heartbeat is acknowledged, 1 when the retry budget is exhausted, 2 when the
// gateway rejects the handshake.
NodeReport run_node(const NodeConfig& config, FrameSource& source, Clock& clock);

}  // namespace sentinel
