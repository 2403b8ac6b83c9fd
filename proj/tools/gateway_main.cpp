// SPDX-License-Identifier: Apache-2.0
// sentinel-gateway: serves nodes and monitors until SIGINT/SIGTERM.

#include <csignal>
#include <iostream>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "sentinel/errors.hpp"
#include "sentinel/server.hpp"
#include "sentinel/synthetic.hpp"

using namespace sentinel;

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("sentinel"));
  CLI::App app{"Surveillance gateway: detection, recognition and the monitor feed"};
  std::string config_path;
  std::string registry_path;
  std::string log_level;
  app.add_option("--config", config_path, "Gateway config file (JSON)")->check(CLI::ExistingFile);
  app.add_option("--registry", registry_path, "Subject registry file (overrides the config)");
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error");
  CLI11_PARSE(app, argc, argv);

  try {
    GatewayConfig cfg = load_config(config_path);
    if (!registry_path.empty()) cfg.registry_path = registry_path;
    if (!log_level.empty()) cfg.log_level = log_level;
    spdlog::set_level(spdlog::level::from_str(cfg.log_level));

    EmbedderNetwork net = load_network(cfg.embedder_path);
    Registry subjects(cfg.registry_options());
    if (std::filesystem::exists(cfg.registry_path)) {
      subjects = load_registry(cfg.registry_path);
      subjects.set_options(cfg.registry_options());
    } else {
      spdlog::info("no registry at {}; starting empty", cfg.registry_path.string());
    }
    Registry operators;
    if (std::filesystem::exists(cfg.operator_registry_path)) {
      operators = load_registry(cfg.operator_registry_path);
    } else {
      spdlog::warn("no operator registry at {}; nobody can log in", cfg.operator_registry_path.string());
    }
    spdlog::info("loaded {} subjects and {} operators", subjects.size(), operators.size());

    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    SystemClock clock;
    Gateway gateway(cfg, std::move(net), std::move(subjects), std::move(operators), template_cascade(), clock);
    GatewayServer server(gateway);
    server.start();

    int sig = 0;
    sigwait(&signals, &sig);
    spdlog::info("signal {}; shutting down", sig);
    server.stop();
    gateway.save_subjects();
    const auto s = gateway.stats();
    spdlog::info("frames {} sightings {} guests {} alerts {}", s.frames_processed, s.sightings, s.guests_enrolled,
                 s.alerts);
    return 0;
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
}
