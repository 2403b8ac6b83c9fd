// SPDX-License-Identifier: Apache-2.0
#include "sentinel/clock.hpp"

#include <thread>

namespace sentinel {

std::int64_t SystemClock::now_ms() const {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

void SystemClock::sleep_for(std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }

std::int64_t ManualClock::now_ms() const {
  std::lock_guard lock(mu_);
  return now_;
}

void ManualClock::sleep_for(std::chrono::milliseconds d) {
  std::unique_lock lock(mu_);
  const std::int64_t wake = now_ + d.count();
  const std::uint64_t gen = generation_;
  ++sleepers_;
  ++sleep_calls_;
  cv_.notify_all();
  cv_.wait(lock, [&] { return now_ >= wake || generation_ != gen; });
  --sleepers_;
  cv_.notify_all();
}

void ManualClock::advance(std::chrono::milliseconds d) {
  std::lock_guard lock(mu_);
  now_ += d.count();
  cv_.notify_all();
}

void ManualClock::set(std::int64_t ms) {
  std::lock_guard lock(mu_);
  now_ = ms;
  cv_.notify_all();
}

int ManualClock::sleepers() const {
  std::lock_guard lock(mu_);
  return sleepers_;
}

std::uint64_t ManualClock::sleep_calls() const {
  std::lock_guard lock(mu_);
  return sleep_calls_;
}

bool ManualClock::wait_for_sleepers(int n, std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mu_);
  return cv_.wait_for(lock, timeout, [&] { return sleepers_ >= n; });
}

void ManualClock::release_all() {
  std::lock_guard lock(mu_);
  ++generation_;
  cv_.notify_all();
}

}  // namespace sentinel
