#include "polypeval/rate_limiter.hpp"

#include <stdexcept>

namespace polypeval {

RateLimiter::RateLimiter(int max_requests, Clock::duration window, Clock& clock)
    : max_requests_(max_requests), window_(window), clock_(&clock) {
  if (max_requests <= 0) throw std::invalid_argument("rate limit must be positive");
}

Clock::time_point RateLimiter::acquire() {
  // The lock is held while waiting so queued callers are admitted in order.
  std::lock_guard lock(mu_);
  for (;;) {
    const auto now = clock_->now();
    while (!granted_.empty() && granted_.front() + window_ <= now) granted_.pop_front();
    if (static_cast<int>(granted_.size()) < max_requests_) {
      granted_.push_back(now);
      return now;
    }
    clock_->sleep_until(granted_.front() + window_);
  }
}

}  // namespace polypeval
