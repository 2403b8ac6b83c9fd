// SPDX-License-Identifier: Apache-2.0
// sentinel-node: streams a directory of PNM images or a synthetic scene
// sequence to the gateway.

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "sentinel/errors.hpp"
#include "sentinel/net.hpp"
#include "sentinel/node.hpp"

using namespace sentinel;

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("sentinel"));
  CLI::App app{"Sensor node"};
  NodeConfig cfg;
  std::string gateway = "127.0.0.1:7401";
  std::string truth;
  std::string log_level = "info";
  bool detect_local = false;
  app.add_option("--id", cfg.node_id, "Node id")->required();
  app.add_option("--gateway", gateway, "Gateway node port as host:port")->capture_default_str();
  app.add_option("--source", cfg.source, "Image directory or synthetic:<seed>[:<id>,<id>,...]")->required();
  app.add_option("--fps", cfg.frame_rate, "Frames per second (at most 30)")->capture_default_str();
  app.add_flag("--loop", cfg.loop, "Restart the source when it ends");
  app.add_option("--retries", cfg.retry_budget, "Failed connection attempts tolerated in a row")->capture_default_str();
  app.add_option("--frames", cfg.max_frames, "Stop after this many frames (0: when the source ends)");
  app.add_option("--truth", truth, "Write ground truth for synthetic frames here (JSON lines)");
  app.add_option("--log-level", log_level)->capture_default_str();
  app.add_flag("--detect-local", detect_local, "Reserved; on-node detection is not implemented");
  CLI11_PARSE(app, argc, argv);
  if (detect_local) {
    spdlog::error("--detect-local is not implemented; the gateway does all detection");
    return 1;
  }

  spdlog::set_level(spdlog::level::from_str(log_level));
  try {
    std::tie(cfg.gateway_host, cfg.gateway_port) = parse_endpoint(gateway);
    cfg.truth_path = truth;
    cfg.validate();
    auto source = open_source(cfg.source, cfg.loop);
    SystemClock clock;
    const NodeReport r = run_node(cfg, *source, clock);
    spdlog::info("sent {} frames (last sequence {}) over {} connection(s)", r.frames_sent, r.last_sequence,
                 r.connections);
    return r.exit_code;
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
}
