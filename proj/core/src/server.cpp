// SPDX-License-Identifier: Apache-2.0
#include "sentinel/server.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>

#include <spdlog/spdlog.h>

#include <algorithm>
#include <array>

#include "sentinel/errors.hpp"
#include "sentinel/websocket.hpp"

namespace sentinel {

namespace {

using namespace std::chrono_literals;

constexpr auto kAcceptPoll = 100ms;
constexpr auto kSniffTimeout = 5s;
constexpr std::size_t kOutboxLimit = 256;

std::string peer_name(const Socket& s) {
  sockaddr_in addr{};
  socklen_t len = sizeof(addr);
  if (::getpeername(s.fd(), reinterpret_cast<sockaddr*>(&addr), &len) != 0) return "?";
  std::array<char, INET_ADDRSTRLEN> buf{};
  ::inet_ntop(AF_INET, &addr.sin_addr, buf.data(), buf.size());
  return std::string(buf.data()) + ":" + std::to_string(ntohs(addr.sin_port));
}

// Outgoing messages for one monitor connection, written by its own thread
// so a slow client never blocks the gateway. Pushing to a broken or
// backed-up outbox throws, which the gateway counts as a send failure.
class Outbox {
 public:
  explicit Outbox(std::shared_ptr<MessageChannel> channel)
      : channel_(std::move(channel)), writer_([this] { run(); }) {}

  ~Outbox() {
    {
      std::lock_guard lock(mu_);
      closing_ = true;
    }
    cv_.notify_all();
    writer_.join();
  }

  void push(const Message& msg) {
    std::lock_guard lock(mu_);
    if (broken_) throw ConnectionClosed("connection to " + channel_->describe() + " is broken");
    if (queue_.size() >= kOutboxLimit) throw IoError("outbox for " + channel_->describe() + " is full");
    queue_.push_back(msg);
    cv_.notify_all();
  }

 private:
  void run() {
    std::unique_lock lock(mu_);
    for (;;) {
      cv_.wait(lock, [this] { return closing_ || !queue_.empty(); });
      if (queue_.empty()) return;
      Message msg = std::move(queue_.front());
      queue_.pop_front();
      lock.unlock();
      bool ok = true;
      try {
        channel_->send(msg);
      } catch (const std::exception& e) {
        spdlog::debug("send to {} failed: {}", channel_->describe(), e.what());
        ok = false;
      }
      lock.lock();
      if (!ok) {
        broken_ = true;
        queue_.clear();
      }
    }
  }

  std::shared_ptr<MessageChannel> channel_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Message> queue_;
  bool closing_ = false;
  bool broken_ = false;
  std::thread writer_;
};

}  // namespace

GatewayServer::GatewayServer(Gateway& gateway) : gateway_(gateway) {}

GatewayServer::~GatewayServer() { stop(); }

void GatewayServer::start() {
  if (started_) return;
  const auto& cfg = gateway_.config();
  node_listener_ = Listener::bind(cfg.node_address, cfg.node_port);
  monitor_listener_ = Listener::bind(cfg.monitor_address, cfg.monitor_port);
  node_port_ = node_listener_.port();
  monitor_port_ = monitor_listener_.port();
  started_ = true;
  stopping_ = false;
  pipeline_ = std::thread([this] { pipeline_loop(); });
  if (cfg.flush_tick_ms > 0) timer_ = std::thread([this] { timer_loop(); });
  node_acceptor_ = std::thread([this] { accept_loop(node_listener_, false); });
  monitor_acceptor_ = std::thread([this] { accept_loop(monitor_listener_, true); });
  spdlog::info("gateway listening: nodes on {}:{}, monitors on {}:{}", cfg.node_address, node_port_,
               cfg.monitor_address, monitor_port_);
}

void GatewayServer::stop() {
  if (!started_) return;
  stopping_ = true;
  if (node_acceptor_.joinable()) node_acceptor_.join();
  if (monitor_acceptor_.joinable()) monitor_acceptor_.join();
  node_listener_.close();
  monitor_listener_.close();
  {
    std::lock_guard lock(conns_mu_);
    for (auto& c : conns_) {
      std::lock_guard clock(c.mu);
      if (c.fd >= 0) ::shutdown(c.fd, SHUT_RDWR);
    }
  }
  for (auto& c : conns_) {
    if (c.thread.joinable()) c.thread.join();
  }
  conns_.clear();
  queue_cv_.notify_all();
  timer_cv_.notify_all();
  if (pipeline_.joinable()) pipeline_.join();
  if (timer_.joinable()) timer_.join();
  queue_.clear();
  started_ = false;
  spdlog::info("gateway stopped");
}

void GatewayServer::reap() {
  std::lock_guard lock(conns_mu_);
  for (auto it = conns_.begin(); it != conns_.end();) {
    if (it->done) {
      it->thread.join();
      it = conns_.erase(it);
    } else {
      ++it;
    }
  }
}

void GatewayServer::accept_loop(Listener& listener, bool monitor) {
  while (!stopping_) {
    std::optional<Socket> s;
    try {
      s = listener.accept(kAcceptPoll);
    } catch (const IoError& e) {
      spdlog::error("accept failed: {}", e.what());
      std::this_thread::sleep_for(kAcceptPoll);
      continue;
    }
    reap();
    if (!s) continue;
    std::lock_guard lock(conns_mu_);
    auto& conn = conns_.emplace_back();
    conn.fd = s->fd();
    conn.thread = std::thread([this, &conn, sock = std::move(*s), monitor]() mutable {
      const std::string peer = peer_name(sock);
      try {
        if (monitor) {
          serve_monitor(conn, std::move(sock), peer);
        } else {
          serve_node(conn, std::move(sock), peer);
        }
      } catch (const std::exception& e) {
        spdlog::warn("connection {} ended: {}", peer, e.what());
      }
      {
        std::lock_guard clock(conn.mu);
        conn.fd = -1;
      }
      conn.done = true;
    });
  }
}

void GatewayServer::serve_node(Connection&, Socket socket, std::string peer) {
  auto channel = std::make_shared<FramedChannel>(std::move(socket), peer);
  NodeLink link;
  const Sender reply = [&](const Message& m) { channel->send(m); };
  spdlog::debug("node connection from {}", peer);
  try {
    while (!stopping_) {
      std::optional<Message> msg;
      try {
        msg = channel->receive(std::chrono::milliseconds(-1));
      } catch (const ProtocolError& e) {
        spdlog::warn("node {} ({}): {}", link.node_id, peer, e.what());
        try {
          reply(make_error(e.code(), e.what()));
        } catch (const IoError&) {
        }
        break;
      }
      if (!msg) continue;
      switch (gateway_.on_node_message(link, *msg, reply)) {
        case NodeAction::keep:
          break;
        case NodeAction::enqueue:
          push(Item{false, std::move(msg->frame), nullptr, link, {}});
          break;
        case NodeAction::barrier:
          push(Item{true, {}, channel, link, std::move(*msg)});
          break;
        case NodeAction::disconnect:
          gateway_.on_node_disconnect(link);
          return;
      }
    }
  } catch (const ConnectionClosed&) {
  }
  gateway_.on_node_disconnect(link);
}

void GatewayServer::serve_monitor(Connection&, Socket socket, std::string peer) {
  std::array<std::uint8_t, 4> head{};
  std::size_t got = 0;
  const auto deadline = std::chrono::steady_clock::now() + kSniffTimeout;
  while (got < head.size() && !stopping_) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0 || !socket.wait_readable(std::min(left, std::chrono::milliseconds(kAcceptPoll)))) {
      if (left.count() <= 0) return;
      continue;
    }
    const std::size_t n = socket.peek(head);
    if (n == 0) return;
    if (n == got) {
      std::this_thread::sleep_for(std::chrono::milliseconds(1));
      continue;
    }
    got = n;
  }
  if (stopping_) return;

  std::shared_ptr<MessageChannel> channel;
  if (looks_like_http(head)) {
    try {
      channel = WebSocketChannel::accept(std::move(socket), peer);
    } catch (const ProtocolError& e) {
      spdlog::warn("websocket upgrade from {} refused: {}", peer, e.what());
      return;
    }
    spdlog::debug("monitor {} connected over WebSocket", peer);
  } else {
    channel = std::make_shared<FramedChannel>(std::move(socket), peer);
    spdlog::debug("monitor {} connected", peer);
  }

  Outbox outbox(channel);
  const auto conn_id = gateway_.open_monitor([&outbox](const Message& m) { outbox.push(m); },
                                             [channel] { channel->shutdown(); });
  try {
    while (!stopping_) {
      std::optional<Message> msg;
      try {
        msg = channel->receive(std::chrono::milliseconds(-1));
      } catch (const ProtocolError& e) {
        spdlog::warn("monitor {}: {}", peer, e.what());
        try {
          outbox.push(make_error(e.code(), e.what()));
        } catch (const IoError&) {
        }
        break;
      }
      if (msg) gateway_.on_monitor_message(conn_id, *msg);
    }
  } catch (const ConnectionClosed&) {
  }
  gateway_.close_monitor(conn_id);
}

void GatewayServer::push(Item item) {
  {
    std::lock_guard lock(queue_mu_);
    if (!item.barrier) {
      std::size_t frames = 0;
      for (const auto& i : queue_) frames += i.barrier ? 0 : 1;
      if (frames >= gateway_.config().queue_capacity) {
        const auto oldest = std::find_if(queue_.begin(), queue_.end(), [](const Item& i) { return !i.barrier; });
        spdlog::warn("frame queue full; dropping {}#{}", oldest->frame.node_id, oldest->frame.sequence);
        queue_.erase(oldest);
        ++dropped_;
      }
    }
    queue_.push_back(std::move(item));
  }
  queue_cv_.notify_all();
}

void GatewayServer::pipeline_loop() {
  std::unique_lock lock(queue_mu_);
  for (;;) {
    queue_cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
    if (stopping_) return;
    Item item = std::move(queue_.front());
    queue_.pop_front();
    busy_ = true;
    lock.unlock();
    try {
      if (item.barrier) {
        item.channel->send(gateway_.heartbeat_ack(item.link, item.heartbeat));
      } else {
        gateway_.process_frame(item.frame);
      }
    } catch (const std::exception& e) {
      spdlog::warn("pipeline: {}", e.what());
    }
    lock.lock();
    busy_ = false;
    if (queue_.empty()) idle_cv_.notify_all();
  }
}

bool GatewayServer::wait_idle(std::chrono::milliseconds timeout) {
  std::unique_lock lock(queue_mu_);
  return idle_cv_.wait_for(lock, timeout, [this] { return queue_.empty() && !busy_; });
}

// Polls the gateway clock, so a paused clock only flushes once advanced.
void GatewayServer::timer_loop() {
  const auto tick = gateway_.config().flush_tick_ms;
  Clock& clock = gateway_.clock();
  std::int64_t next = clock.now_ms() + tick;
  std::unique_lock lock(timer_mu_);
  while (!stopping_) {
    timer_cv_.wait_for(lock, std::chrono::milliseconds(std::min<std::int64_t>(tick, 20)));
    if (stopping_) break;
    const auto now = clock.now_ms();
    if (now < next) continue;
    lock.unlock();
    try {
      gateway_.flush_buffers(now);
      gateway_.check_liveness(now);
    } catch (const std::exception& e) {
      spdlog::warn("timer: {}", e.what());
    }
    lock.lock();
    while (next <= now) next += tick;
  }
}

}  // namespace sentinel
