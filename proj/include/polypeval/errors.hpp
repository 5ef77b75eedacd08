#pragma once

#include <stdexcept>
#include <string>

namespace polypeval {

/// Bad user input: config files, manifests, fixtures, CLI arguments.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Filesystem failures (copy, write, unreadable image).
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class BackendError : public std::runtime_error {
 public:
  enum class Kind { Auth, RetriesExhausted, Malformed, Timeout, Network, Unscripted, Rejected };

  BackendError(Kind kind, const std::string& what, int retries = 0)
      : std::runtime_error(what), kind_(kind), retries_(retries) {}

  Kind kind() const { return kind_; }
  int retries() const { return retries_; }

 private:
  Kind kind_;
  int retries_;
};

/// Every row of a run failed at the backend.
class UnreachableError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The fixture recomputation disagrees with the recorded values.
class VerificationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace polypeval
