// SPDX-License-Identifier: Apache-2.0
#pragma once

// TCP front end for a Gateway: a node port speaking the framed protocol,
// a monitor port that also accepts WebSocket upgrades, a bounded frame
// queue drained by one pipeline thread, and an optional flush timer.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <list>
#include <memory>
#include <mutex>
#include <thread>

#include "sentinel/gateway.hpp"
#include "sentinel/net.hpp"

namespace sentinel {

class GatewayServer {
 public:
  explicit GatewayServer(Gateway& gateway);
  ~GatewayServer();
  GatewayServer(const GatewayServer&) = delete;
  GatewayServer& operator=(const GatewayServer&) = delete;

  // Binds both ports and starts serving. Throws IoError.
  void start();
  // Closes every connection and joins all threads. Idempotent.
  void stop();

  std::uint16_t node_port() const { return node_port_; }
  std::uint16_t monitor_port() const { return monitor_port_; }

  // Blocks until the frame queue is empty and the pipeline is idle.
  bool wait_idle(std::chrono::milliseconds timeout);
  std::uint64_t frames_dropped() const { return dropped_.load(); }

 private:
  struct Item {
    bool barrier = false;
    Frame frame;
    std::shared_ptr<MessageChannel> channel;  // barrier only
    NodeLink link;
    Message heartbeat;
  };
  struct Connection {
    std::mutex mu;
    int fd = -1;  // -1 once the connection has finished
    std::thread thread;
    std::atomic<bool> done{false};
  };

  void accept_loop(Listener& listener, bool monitor);
  void serve_node(Connection& conn, Socket socket, std::string peer);
  void serve_monitor(Connection& conn, Socket socket, std::string peer);
  void pipeline_loop();
  void timer_loop();
  void push(Item item);
  void reap();

  Gateway& gateway_;
  Listener node_listener_;
  Listener monitor_listener_;
  std::uint16_t node_port_ = 0;
  std::uint16_t monitor_port_ = 0;
  std::atomic<bool> stopping_{false};
  bool started_ = false;

  std::thread node_acceptor_;
  std::thread monitor_acceptor_;
  std::thread pipeline_;
  std::thread timer_;

  std::mutex conns_mu_;
  std::list<Connection> conns_;

  std::mutex queue_mu_;
  std::condition_variable queue_cv_;
  std::condition_variable idle_cv_;
  std::deque<Item> queue_;
  bool busy_ = false;
  std::atomic<std::uint64_t> dropped_{0};

  std::mutex timer_mu_;
  std::condition_variable timer_cv_;
};

}  // namespace sentinel
