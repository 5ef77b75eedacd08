#pragma once

#include <chrono>
#include <deque>
#include <mutex>

#include "polypeval/clock.hpp"

namespace polypeval {

/// Admits at most `max_requests` acquisitions in any half-open window of
/// length `window`. Callers block (on the clock) until a slot frees up.
class RateLimiter {
 public:
  RateLimiter(int max_requests, Clock::duration window, Clock& clock);

  static RateLimiter per_minute(int requests, Clock& clock) { return {requests, std::chrono::minutes(1), clock}; }

  /// Returns the admission time.
  Clock::time_point acquire();

  int max_requests() const { return max_requests_; }

 private:
  int max_requests_;
  Clock::duration window_;
  Clock* clock_;
  std::mutex mu_;
  std::deque<Clock::time_point> granted_;
};

}  // namespace polypeval
