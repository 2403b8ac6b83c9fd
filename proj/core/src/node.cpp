// SPDX-License-Identifier: Apache-2.0
#include "sentinel/node.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

#include "sentinel/errors.hpp"
#include "sentinel/net.hpp"
#include "sentinel/protocol.hpp"

namespace sentinel {

namespace {

class DirectorySource final : public FrameSource {
 public:
  DirectorySource(std::filesystem::path dir, bool loop) : dir_(std::move(dir)), loop_(loop) {
    if (!std::filesystem::is_directory(dir_)) throw ConfigError("source directory " + dir_.string() + " does not exist");
    for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
      if (entry.is_regular_file()) files_.push_back(entry.path());
    }
    std::sort(files_.begin(), files_.end());
    if (files_.empty()) throw ConfigError("source directory " + dir_.string() + " is empty");
  }

  std::optional<SourceImage> next() override {
    std::size_t misses = 0;
    while (misses < files_.size()) {
      if (pos_ == files_.size()) {
        if (!loop_ || !any_ok_) return std::nullopt;
        pos_ = 0;
      }
      const auto& path = files_[pos_++];
      try {
        SourceImage img{path.filename().string(), read_pnm(path), {}};
        any_ok_ = true;
        return img;
      } catch (const Error& e) {
        spdlog::warn("skipping {}: {}", path.string(), e.what());
        ++misses;
      }
    }
    return std::nullopt;
  }

  std::string describe() const override { return dir_.string(); }

 private:
  std::filesystem::path dir_;
  bool loop_;
  std::vector<std::filesystem::path> files_;
  std::size_t pos_ = 0;
  bool any_ok_ = false;
};

class SyntheticSource final : public FrameSource {
 public:
  SyntheticSource(SyntheticSourceOptions options, bool loop)
      : options_(std::move(options)), loop_(loop), gen_(options_.seed, options_.scene) {
    if (options_.schedule.empty()) {
      for (std::size_t i = 0; i < options_.frames; ++i) options_.schedule.push_back(static_cast<int>(i % 10));
    }
  }

  std::optional<SourceImage> next() override {
    if (pos_ == options_.schedule.size()) {
      if (!loop_) return std::nullopt;
      pos_ = 0;
      gen_ = SceneGenerator(options_.seed, options_.scene);
    }
    const int id = options_.schedule[pos_];
    std::vector<int> ids;
    if (id >= 0) ids.push_back(id);
    auto scene = gen_.render(ids);
    return SourceImage{"synthetic-" + std::to_string(pos_++), to_pnm(scene.image), std::move(scene.faces)};
  }

  std::string describe() const override { return "synthetic:" + std::to_string(options_.seed); }

 private:
  SyntheticSourceOptions options_;
  bool loop_;
  SceneGenerator gen_;
  std::size_t pos_ = 0;
};

template <typename T>
T parse_number(std::string_view text, const std::string& what) {
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) throw ConfigError("bad " + what + " '" + std::string(text) + "'");
  return value;
}

}  // namespace

std::unique_ptr<FrameSource> directory_source(const std::filesystem::path& dir, bool loop) {
  return std::make_unique<DirectorySource>(dir, loop);
}

std::unique_ptr<FrameSource> synthetic_source(const SyntheticSourceOptions& options, bool loop) {
  return std::make_unique<SyntheticSource>(options, loop);
}

std::unique_ptr<FrameSource> open_source(const std::string& source, bool loop) {
  constexpr std::string_view prefix = "synthetic:";
  if (!source.starts_with(prefix)) return directory_source(source, loop);
  std::string_view rest = std::string_view(source).substr(prefix.size());
  SyntheticSourceOptions opts;
  const auto colon = rest.find(':');
  opts.seed = parse_number<std::uint64_t>(rest.substr(0, colon), "synthetic seed");
  if (colon != std::string_view::npos) {
    std::string_view list = rest.substr(colon + 1);
    while (!list.empty()) {
      const auto comma = list.find(',');
      opts.schedule.push_back(parse_number<int>(list.substr(0, comma), "identity"));
      list = comma == std::string_view::npos ? std::string_view() : list.substr(comma + 1);
    }
    if (opts.schedule.empty()) throw ConfigError("synthetic schedule is empty");
  }
  return synthetic_source(opts, loop);
}

Frame FrameStamper::stamp(const SourceImage& img) {
  Frame f;
  f.node_id = node_id_;
  f.sequence = ++sequence_;
  f.timestamp_ms = clock_.now_ms();
  f.width = static_cast<std::uint32_t>(img.image.width);
  f.height = static_cast<std::uint32_t>(img.image.height);
  f.channels = static_cast<std::uint8_t>(img.image.channels);
  f.pixels = img.image.pixels;
  return f;
}

void NodeConfig::validate() const {
  if (node_id.empty()) throw ConfigError("node id must not be empty");
  if (!(frame_rate > 0.0) || frame_rate > 30.0) throw ConfigError("frame rate must be in (0, 30]");
  if (retry_budget < 0) throw ConfigError("retry budget must be non-negative");
  if (heartbeat_interval_ms <= 0 || backoff_initial_ms <= 0 || backoff_cap_ms < backoff_initial_ms) {
    throw ConfigError("heartbeat and backoff intervals must be positive");
  }
}

std::int64_t backoff_delay_ms(const NodeConfig& config, int attempt) {
  std::int64_t d = config.backoff_initial_ms;
  for (int i = 1; i < attempt && d < config.backoff_cap_ms; ++i) d *= 2;
  return std::min(d, config.backoff_cap_ms);
}

namespace {

class NodeSession {
 public:
  NodeSession(const NodeConfig& config, FrameSource& source, Clock& clock)
      : config_(config), source_(source), clock_(clock), stamper_(config.node_id, clock) {
    if (!config_.truth_path.empty()) {
      truth_.open(config_.truth_path);
      if (!truth_) throw IoError("cannot write " + config_.truth_path.string());
    }
  }

  NodeReport run() {
    const auto period = std::chrono::milliseconds(static_cast<std::int64_t>(std::llround(1000.0 / config_.frame_rate)));
    std::optional<SourceImage> pending = source_.next();
    if (!pending) throw ConfigError("source " + source_.describe() + " produced no frames");
    while (true) {
      if (!channel_) {
        if (!connect()) return finish(1);
        if (report_.exit_code == 2) return report_;
      }
      try {
        if (!pending || (config_.max_frames > 0 && report_.frames_sent >= config_.max_frames)) {
          if (final_heartbeat()) return finish(0);
          continue;
        }
        send_frame(*pending);
        pending = source_.next();
        drain();
        if (clock_.now_ms() >= next_heartbeat_) {
          send_heartbeat(false);
          next_heartbeat_ = clock_.now_ms() + config_.heartbeat_interval_ms;
        }
        if (pending && !(config_.max_frames > 0 && report_.frames_sent >= config_.max_frames)) {
          clock_.sleep_for(period);
        }
      } catch (const IoError& e) {
        spdlog::warn("node {}: connection lost: {}", config_.node_id, e.what());
        channel_.reset();
      } catch (const ProtocolError& e) {
        spdlog::warn("node {}: {}", config_.node_id, e.what());
        channel_.reset();
      }
    }
  }

 private:
  NodeReport finish(int code) {
    report_.exit_code = code;
    report_.last_sequence = stamper_.last_sequence();
    return report_;
  }

  // Connects and handshakes, backing off between attempts.
  bool connect() {
    int failures = 0;
    for (;;) {
      try {
        auto socket = connect_tcp(config_.gateway_host, config_.gateway_port);
        channel_ = std::make_unique<FramedChannel>(std::move(socket),
                                                   config_.gateway_host + ":" + std::to_string(config_.gateway_port));
        channel_->send(make_message(MessageType::node_hello,
                                    {{"node_id", config_.node_id},
                                     {"source", source_.describe()},
                                     {"frame_rate", config_.frame_rate},
                                     {"next_sequence", stamper_.last_sequence() + 1}}));
        const auto reply = channel_->receive(std::chrono::milliseconds(config_.reply_timeout_ms));
        if (!reply) throw IoError("no NODE_HELLO reply");
        if (reply->type == MessageType::error) {
          report_.error = reply->body.value("message", "handshake rejected");
          spdlog::error("node {}: gateway rejected handshake: {}", config_.node_id, report_.error);
          channel_.reset();
          report_.exit_code = 2;
          report_.last_sequence = stamper_.last_sequence();
          return true;
        }
        if (reply->type != MessageType::node_hello) throw IoError("unexpected reply " + std::string(to_string(reply->type)));
        ++report_.connections;
        next_heartbeat_ = clock_.now_ms() + config_.heartbeat_interval_ms;
        spdlog::info("node {}: connected to {}:{}", config_.node_id, config_.gateway_host, config_.gateway_port);
        return true;
      } catch (const Error& e) {
        channel_.reset();
        ++failures;
        if (failures > config_.retry_budget) {
          report_.error = e.what();
          spdlog::error("node {}: giving up after {} attempts: {}", config_.node_id, failures, e.what());
          return false;
        }
        const auto delay = backoff_delay_ms(config_, failures);
        spdlog::warn("node {}: {}; retrying in {} ms", config_.node_id, e.what(), delay);
        clock_.sleep_for(std::chrono::milliseconds(delay));
      }
    }
  }

  void send_frame(const SourceImage& img) {
    const Frame f = stamper_.stamp(img);
    if (truth_.is_open()) {
      nlohmann::json faces = nlohmann::json::array();
      for (const auto& p : img.truth) faces.push_back({{"label", p.label}, {"box", p.box}});
      truth_ << nlohmann::json{{"sequence", f.sequence}, {"source", img.name}, {"faces", faces}}.dump() << '\n';
      truth_.flush();
    }
    channel_->send(make_frame_message(f));
    ++report_.frames_sent;
    report_.last_sequence = f.sequence;
  }

  std::uint64_t send_heartbeat(bool final) {
    const std::uint64_t nonce = ++nonce_;
    channel_->send(make_message(MessageType::heartbeat, {{"node_id", config_.node_id},
                                                         {"nonce", nonce},
                                                         {"last_sequence", stamper_.last_sequence()},
                                                         {"final", final}}));
    return nonce;
  }

  void handle(const Message& m) {
    if (m.type == MessageType::error) {
      spdlog::warn("node {}: gateway error {}: {}", config_.node_id, m.body.value("code", ""), m.body.value("message", ""));
    }
  }

  // Consumes whatever the gateway has sent without blocking.
  void drain() {
    while (auto m = channel_->receive(std::chrono::milliseconds(0))) handle(*m);
  }

  bool final_heartbeat() {
    const std::uint64_t nonce = send_heartbeat(true);
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(config_.reply_timeout_ms);
    while (std::chrono::steady_clock::now() < deadline) {
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      const auto m = channel_->receive(std::max(left, std::chrono::milliseconds(1)));
      if (!m) break;
      if (m->type == MessageType::heartbeat && m->body.value("nonce", std::uint64_t{0}) == nonce) {
        channel_.reset();
        spdlog::info("node {}: done after {} frames", config_.node_id, report_.frames_sent);
        return true;
      }
      handle(*m);
    }
    throw IoError("final heartbeat was not acknowledged");
  }

  const NodeConfig& config_;
  FrameSource& source_;
  Clock& clock_;
  FrameStamper stamper_;
  std::unique_ptr<FramedChannel> channel_;
  std::ofstream truth_;
  std::int64_t next_heartbeat_ = 0;
  std::uint64_t nonce_ = 0;
  NodeReport report_;
};

}  // namespace

NodeReport run_node(const NodeConfig& config, FrameSource& source, Clock& clock) {
  config.validate();
  NodeSession session(config, source, clock);
  return session.run();
}

}  // namespace sentinel
