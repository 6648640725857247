// Time sources. Everything that schedules work reads time through Clock so the
// same code runs against wall time or a simulated timeline.

#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <stdexcept>
#include <thread>

namespace softhand {

class Clock {
 public:
  virtual ~Clock() = default;
  virtual std::int64_t now_us() const = 0;
  virtual void sleep_until(std::int64_t t_us) = 0;
};

/// Time moves only when told to.
class VirtualClock final : public Clock {
 public:
  explicit VirtualClock(std::int64_t start_us = 0) : now_(start_us) {}

  std::int64_t now_us() const override { return now_.load(); }
  void sleep_until(std::int64_t t_us) override {
    if (t_us > now_.load()) now_.store(t_us);
  }

  void set(std::int64_t t_us) {
    if (t_us < now_.load()) throw std::invalid_argument("virtual clock cannot run backwards");
    now_.store(t_us);
  }
  void advance(std::int64_t dt_us) { set(now_.load() + dt_us); }

 private:
  std::atomic<std::int64_t> now_;
};

/// Monotonic wall time, counted from construction.
class WallClock final : public Clock {
 public:
  WallClock() : origin_(std::chrono::steady_clock::now()) {}

  std::int64_t now_us() const override {
    return std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - origin_).count();
  }
  void sleep_until(std::int64_t t_us) override { std::this_thread::sleep_until(origin_ + std::chrono::microseconds(t_us)); }

 private:
  std::chrono::steady_clock::time_point origin_;
};

}  // namespace softhand
