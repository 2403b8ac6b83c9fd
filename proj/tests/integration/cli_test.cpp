// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "sentinel/gateway.hpp"
#include "sentinel/net.hpp"
#include "test_support.hpp"

extern char** environ;

using namespace sentinel;
namespace st = sentinel::testing;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

Result run(const std::string& cmd) {
  Result r;
  FILE* p = ::popen((cmd + " 2>/dev/null").c_str(), "r");
  if (!p) return r;
  char buf[4096];
  while (const auto n = std::fread(buf, 1, sizeof(buf), p)) r.out.append(buf, n);
  const int status = ::pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

pid_t spawn(const std::vector<std::string>& args) {
  std::vector<char*> argv;
  for (const auto& a : args) argv.push_back(const_cast<char*>(a.c_str()));
  argv.push_back(nullptr);
  pid_t pid = -1;
  if (::posix_spawn(&pid, argv[0], nullptr, nullptr, argv.data(), environ) != 0) return -1;
  return pid;
}

int wait_exit(pid_t pid) {
  int status = 0;
  ::waitpid(pid, &status, 0);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::uint16_t free_port() { return Listener::bind("127.0.0.1", 0).port(); }

const std::string kTrainer = SENTINEL_TRAINER_BIN;
const std::string kGateway = SENTINEL_GATEWAY_BIN;
const std::string kNode = SENTINEL_NODE_BIN;

}  // namespace

TEST(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(run(kTrainer + " --help").code, 0);
  EXPECT_EQ(run(kGateway + " --help").code, 0);
  EXPECT_EQ(run(kNode + " --help").code, 0);
  EXPECT_NE(run(kNode + " --source synthetic:1").code, 0);  // --id missing
  EXPECT_NE(run(kTrainer + " train").code, 0);
  EXPECT_EQ(run(kNode + " --id n --source synthetic:1 --detect-local").code, 1);
}

TEST(Cli, NodeWithoutGatewayExitsWithOne) {
  const auto port = free_port();
  const auto r = run(kNode + " --id n --source synthetic:1:0 --retries 0 --gateway 127.0.0.1:" + std::to_string(port));
  EXPECT_EQ(r.code, 1);
}

TEST(Cli, GatewayRejectsBadConfig) {
  st::TempDir dir;
  {
    std::ofstream(dir / "bad.json") << R"({"guest_threshold": 3})";
  }
  EXPECT_EQ(run(kGateway + " --config " + (dir / "bad.json").string()).code, 1);
}

TEST(Cli, TrainerPipelineFeedsALiveGateway) {
  st::TempDir dir;
  const auto d = [&](const std::string& p) { return (dir / p).string(); };
  ASSERT_EQ(run(kTrainer + " synth --out " + d("raw") + " --subjects 4 --images 8 --seed 3").code, 0);
  ASSERT_EQ(run(kTrainer + " synth --out " + d("raw-ops") + " --subjects 2 --images 3 --first-identity 20").code, 0);

  const auto aligned = run(kTrainer + " align --raw " + d("raw") + " --out " + d("aligned"));
  ASSERT_EQ(aligned.code, 0);
  const auto report = nlohmann::json::parse(aligned.out);
  EXPECT_EQ(report.at("scanned"), 32);
  EXPECT_GE(report.at("detected").get<int>(), 30);
  ASSERT_EQ(run(kTrainer + " align --raw " + d("raw-ops") + " --out " + d("ops")).code, 0);

  const auto trained = run(kTrainer + " train --corpus " + d("aligned") + " --out " + d("embedder.json") +
                           " --epochs 60 --seed 1 --predictions " + d("pred.jsonl") + " --registry " +
                           d("registry.jsonl"));
  ASSERT_EQ(trained.code, 0);
  const auto summary = nlohmann::json::parse(trained.out);
  EXPECT_EQ(summary.at("subjects"), 4);
  EXPECT_GT(summary.at("holdout_images").get<int>(), 0);
  EXPECT_TRUE(std::filesystem::exists(dir / "pred.jsonl"));

  const auto enrolled = run(kTrainer + " enroll-operators --corpus " + d("ops") + " --embedder " +
                            d("embedder.json") + " --out " + d("operators.jsonl") + " --password subject-20=pw");
  ASSERT_EQ(enrolled.code, 0);
  EXPECT_NE(enrolled.out.find("enrolled 2 operators"), std::string::npos);

  const auto node_port = free_port();
  const auto monitor_port = free_port();
  {
    std::ofstream(dir / "gateway.json") << nlohmann::json{{"node_address", "127.0.0.1"},
                                                          {"monitor_address", "127.0.0.1"},
                                                          {"node_port", node_port},
                                                          {"monitor_port", monitor_port},
                                                          {"embedder_path", "embedder.json"},
                                                          {"registry_path", "registry.jsonl"},
                                                          {"operator_registry_path", "operators.jsonl"},
                                                          {"sightings_log_path", "sightings.jsonl"},
                                                          {"log_level", "warn"}}
                                                              .dump();
  }
  const pid_t gw = spawn({kGateway, "--config", d("gateway.json")});
  ASSERT_GT(gw, 0);
  const auto node = run(kNode + " --id door --fps 20 --source synthetic:5:0,1,2,3,-1,0 --gateway 127.0.0.1:" +
                        std::to_string(node_port) + " --truth " + d("truth.jsonl"));
  EXPECT_EQ(node.code, 0);
  ::kill(gw, SIGTERM);
  EXPECT_EQ(wait_exit(gw), 0);

  const auto log = read_sightings_log(dir / "sightings.jsonl");
  EXPECT_EQ(log.size(), 5u);
  for (const auto& line : log) EXPECT_EQ(line.at("node_id"), "door");
}
