// SPDX-License-Identifier: Apache-2.0
#pragma once

// Injectable time source. Components take a Clock& so tests can run on a
// paused clock that only moves when the test says so.

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <mutex>

namespace sentinel {

class Clock {
 public:
  virtual ~Clock() = default;
  // Milliseconds since the Unix epoch.
  virtual std::int64_t now_ms() const = 0;
  virtual void sleep_for(std::chrono::milliseconds d) = 0;
};

class SystemClock final : public Clock {
 public:
  std::int64_t now_ms() const override;
  void sleep_for(std::chrono::milliseconds d) override;
};

// Time stands still until advance() or set(). Sleepers block until the
// clock reaches their wake-up time, so a test thread fully controls the
// schedule of every component sharing the clock.
class ManualClock final : public Clock {
 public:
  explicit ManualClock(std::int64_t start_ms = 0) : now_(start_ms) {}

  std::int64_t now_ms() const override;
  void sleep_for(std::chrono::milliseconds d) override;

  void advance(std::chrono::milliseconds d);
  void set(std::int64_t ms);
  // Number of threads currently blocked in sleep_for().
  int sleepers() const;
  // Total number of sleep_for() calls so far.
  std::uint64_t sleep_calls() const;
  // Blocks (in real time) until at least `n` threads are asleep or the
  // timeout passes. Returns whether the condition was met.
  bool wait_for_sleepers(int n, std::chrono::milliseconds timeout) const;
  // Wakes every sleeper immediately, as if its time had come.
  void release_all();

 private:
  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  std::int64_t now_;
  int sleepers_ = 0;
  std::uint64_t sleep_calls_ = 0;
  std::uint64_t generation_ = 0;
};

}  // namespace sentinel
