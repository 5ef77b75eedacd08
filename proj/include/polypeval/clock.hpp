#pragma once

#include <chrono>
#include <mutex>

namespace polypeval {

class Clock {
 public:
  using time_point = std::chrono::steady_clock::time_point;
  using duration = std::chrono::steady_clock::duration;

  virtual ~Clock() = default;
  virtual time_point now() = 0;
  virtual void sleep_until(time_point t) = 0;
  void sleep_for(duration d) { sleep_until(now() + d); }
};

class SteadyClock final : public Clock {
 public:
  time_point now() override;
  void sleep_until(time_point t) override;

  static SteadyClock& instance();
};

/// Test clock: sleeping advances time instantly.
class VirtualClock final : public Clock {
 public:
  time_point now() override;
  void sleep_until(time_point t) override;
  void advance(duration d);

 private:
  std::mutex mu_;
  time_point now_{};
};

}  // namespace polypeval
