// SPDX-License-Identifier: Apache-2.0
#include "sentinel/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include "sentinel/errors.hpp"

extern char** environ;

namespace sentinel {

namespace {

const char* const kKeys[] = {
    "node_address",     "node_port",          "monitor_address", "monitor_port",
    "registry_path",    "sightings_log_path", "embedder_path",   "operator_registry_path",
    "guest_threshold",  "matcher",            "min_face",        "scale_factor",
    "stage_thresholds", "nms_intra",          "nms_final",       "stride",
    "crop_size",        "queue_capacity",     "flush_tick_ms",   "heartbeat_interval_ms",
    "heartbeat_misses", "log_level",
};

std::string env_name(std::string_view key) {
  std::string name = "SENTINEL_";
  for (char c : key) name.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  return name;
}

// Environment values are JSON when they parse as JSON, plain strings otherwise.
nlohmann::json env_value(const std::string& text) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception&) {
    return text;
  }
}

template <typename T>
T get(const nlohmann::json& doc, const char* key) {
  try {
    return doc.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

std::filesystem::path resolve(const std::filesystem::path& p, const std::filesystem::path& base) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

}  // namespace

void GatewayConfig::validate() const {
  if (node_port == monitor_port && node_port != 0) throw ConfigError("node_port and monitor_port must differ");
  if (!(guest_threshold > 0.0 && guest_threshold < 1.0)) throw ConfigError("guest_threshold must lie in (0, 1)");
  if (matcher != "centroid" && matcher != "knn") throw ConfigError("matcher must be 'centroid' or 'knn'");
  if (crop_size < 4) throw ConfigError("crop_size must be at least 4");
  if (queue_capacity == 0) throw ConfigError("queue_capacity must be positive");
  if (flush_tick_ms < 0) throw ConfigError("flush_tick_ms must not be negative");
  if (heartbeat_interval_ms <= 0 || heartbeat_misses <= 0) throw ConfigError("heartbeat settings must be positive");
  if (detector.min_face < kBaseWindow) throw ConfigError("min_face must be at least 12");
  if (!(detector.scale_factor > 0.0 && detector.scale_factor < 1.0)) {
    throw ConfigError("scale_factor must lie in (0, 1)");
  }
  detector.validate();
}

RegistryOptions GatewayConfig::registry_options() const {
  RegistryOptions o;
  o.guest_threshold = guest_threshold;
  o.matcher = matcher == "knn" ? Matcher::knn : Matcher::centroid;
  return o;
}

Environment sentinel_environment() {
  Environment env;
  for (char** e = environ; e && *e; ++e) {
    std::string_view entry(*e);
    if (!entry.starts_with("SENTINEL_")) continue;
    const auto eq = entry.find('=');
    if (eq == std::string_view::npos) continue;
    env.emplace(std::string(entry.substr(0, eq)), std::string(entry.substr(eq + 1)));
  }
  return env;
}

GatewayConfig config_from_json(const nlohmann::json& doc_in, const Environment& env,
                               const std::filesystem::path& base_dir) {
  if (!doc_in.is_object()) throw ConfigError("config must be a JSON object");
  nlohmann::json doc = doc_in;
  for (const auto& [key, value] : doc.items()) {
    if (std::none_of(std::begin(kKeys), std::end(kKeys), [&](const char* k) { return key == k; })) {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
  for (const char* key : kKeys) {
    if (const auto it = env.find(env_name(key)); it != env.end()) doc[key] = env_value(it->second);
  }

  GatewayConfig c;
  auto set = [&](const char* key, auto& field) {
    if (doc.contains(key)) field = get<std::remove_reference_t<decltype(field)>>(doc, key);
  };
  auto set_path = [&](const char* key, std::filesystem::path& field) {
    if (doc.contains(key)) field = get<std::string>(doc, key);
    field = resolve(field, base_dir);
  };
  set("node_address", c.node_address);
  set("node_port", c.node_port);
  set("monitor_address", c.monitor_address);
  set("monitor_port", c.monitor_port);
  set_path("registry_path", c.registry_path);
  set_path("sightings_log_path", c.sightings_log_path);
  set_path("embedder_path", c.embedder_path);
  set_path("operator_registry_path", c.operator_registry_path);
  set("guest_threshold", c.guest_threshold);
  set("matcher", c.matcher);
  set("min_face", c.detector.min_face);
  set("scale_factor", c.detector.scale_factor);
  set("stage_thresholds", c.detector.thresholds);
  set("nms_intra", c.detector.nms_intra);
  set("nms_final", c.detector.nms_final);
  set("stride", c.detector.stride);
  set("crop_size", c.crop_size);
  set("queue_capacity", c.queue_capacity);
  set("flush_tick_ms", c.flush_tick_ms);
  set("heartbeat_interval_ms", c.heartbeat_interval_ms);
  set("heartbeat_misses", c.heartbeat_misses);
  set("log_level", c.log_level);
  c.validate();
  return c;
}

GatewayConfig load_config(const std::filesystem::path& path, const Environment& env) {
  if (path.empty()) return config_from_json(nlohmann::json::object(), env);
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config_from_json(doc, env, path.parent_path());
}

nlohmann::json config_to_json(const GatewayConfig& c) {
  return {{"node_address", c.node_address},
          {"node_port", c.node_port},
          {"monitor_address", c.monitor_address},
          {"monitor_port", c.monitor_port},
          {"registry_path", c.registry_path.string()},
          {"sightings_log_path", c.sightings_log_path.string()},
          {"embedder_path", c.embedder_path.string()},
          {"operator_registry_path", c.operator_registry_path.string()},
          {"guest_threshold", c.guest_threshold},
          {"matcher", c.matcher},
          {"min_face", c.detector.min_face},
          {"scale_factor", c.detector.scale_factor},
          {"stage_thresholds", c.detector.thresholds},
          {"nms_intra", c.detector.nms_intra},
          {"nms_final", c.detector.nms_final},
          {"stride", c.detector.stride},
          {"crop_size", c.crop_size},
          {"queue_capacity", c.queue_capacity},
          {"flush_tick_ms", c.flush_tick_ms},
          {"heartbeat_interval_ms", c.heartbeat_interval_ms},
          {"heartbeat_misses", c.heartbeat_misses},
          {"log_level", c.log_level}};
}

}  // namespace sentinel
