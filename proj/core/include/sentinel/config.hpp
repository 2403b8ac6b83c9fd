// SPDX-License-Identifier: Apache-2.0
#pragma once

// Gateway configuration: a flat JSON object whose keys can each be
// overridden by an environment variable SENTINEL_<KEY> (upper case). The
// trainer reads the same file for detector and path settings.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "json.hpp"
#include "sentinel/cascade.hpp"
#include "sentinel/registry.hpp"

namespace sentinel {

inline constexpr std::uint16_t kDefaultNodePort = 7401;
inline constexpr std::uint16_t kDefaultMonitorPort = 7402;
inline constexpr int kDefaultCropSize = 16;

struct GatewayConfig {
  std::string node_address = "0.0.0.0";
  std::uint16_t node_port = kDefaultNodePort;
  std::string monitor_address = "0.0.0.0";
  std::uint16_t monitor_port = kDefaultMonitorPort;
  std::filesystem::path registry_path = "registry.jsonl";
  std::filesystem::path sightings_log_path = "sightings.jsonl";
  std::filesystem::path embedder_path = "embedder.json";
  std::filesystem::path operator_registry_path = "operators.jsonl";
  double guest_threshold = kDefaultGuestThreshold;
  std::string matcher = "centroid";  // or "knn"
  CascadeConfig detector;
  int crop_size = kDefaultCropSize;
  std::size_t queue_capacity = 64;
  std::int64_t flush_tick_ms = 1000;  // 0 disables the flush timer
  std::int64_t heartbeat_interval_ms = 5000;
  int heartbeat_misses = 3;
  std::string log_level = "info";

  // Throws ConfigError on inconsistent values (equal ports, bad thresholds).
  void validate() const;
  RegistryOptions registry_options() const;
};

using Environment = std::map<std::string, std::string>;

// Snapshot of the process environment restricted to SENTINEL_* variables.
Environment sentinel_environment();

// Applies `doc`, then `env` overrides, on top of the defaults. Relative
// paths are resolved against `base_dir`. Unknown keys are rejected.
GatewayConfig config_from_json(const nlohmann::json& doc, const Environment& env = {},
                               const std::filesystem::path& base_dir = {});
// Reads a config file (or only defaults + environment when `path` is empty).
GatewayConfig load_config(const std::filesystem::path& path, const Environment& env = sentinel_environment());
nlohmann::json config_to_json(const GatewayConfig& config);

}  // namespace sentinel
