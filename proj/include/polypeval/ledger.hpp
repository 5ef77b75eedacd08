#pragma once

#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace polypeval {

struct LedgerEntry {
  std::string digest;
  std::string backend_id;
  std::string tag;
  double latency_ms = 0.0;
  int retries = 0;
  bool ok = true;
  std::string error;

  nlohmann::json to_json() const;
  static LedgerEntry from_json(const nlohmann::json& j);
};

/// Append-only JSON Lines record of live backend calls. Thread-safe.
/// Without a path the ledger is kept in memory only.
class RunLedger {
 public:
  RunLedger() = default;
  explicit RunLedger(const std::filesystem::path& path);

  void record(const LedgerEntry& e);
  std::vector<LedgerEntry> entries() const;
  std::size_t size() const;

  static std::vector<LedgerEntry> read(const std::filesystem::path& path);

 private:
  mutable std::mutex mu_;
  std::optional<std::ofstream> file_;
  std::vector<LedgerEntry> entries_;
};

}  // namespace polypeval
