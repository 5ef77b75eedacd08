#include "polypeval/ledger.hpp"

#include <chrono>

#include "polypeval/errors.hpp"

namespace polypeval {

nlohmann::json LedgerEntry::to_json() const {
  nlohmann::json j{{"digest", digest}, {"backend", backend_id}, {"tag", tag},
                   {"latency_ms", latency_ms}, {"retries", retries}, {"ok", ok}};
  if (!error.empty()) j["error"] = error;
  return j;
}

LedgerEntry LedgerEntry::from_json(const nlohmann::json& j) {
  LedgerEntry e;
  e.digest = j.value("digest", "");
  e.backend_id = j.value("backend", "");
  e.tag = j.value("tag", "");
  e.latency_ms = j.value("latency_ms", 0.0);
  e.retries = j.value("retries", 0);
  e.ok = j.value("ok", true);
  e.error = j.value("error", "");
  return e;
}

RunLedger::RunLedger(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  file_.emplace(path, std::ios::app | std::ios::binary);
  if (!*file_) throw IoError("cannot open ledger " + path.string());
}

void RunLedger::record(const LedgerEntry& e) {
  std::lock_guard lock(mu_);
  entries_.push_back(e);
  if (file_) {
    auto j = e.to_json();
    j["time"] = std::chrono::duration_cast<std::chrono::milliseconds>(
                    std::chrono::system_clock::now().time_since_epoch())
                    .count();
    *file_ << j.dump() << '\n';
    file_->flush();
  }
}

std::vector<LedgerEntry> RunLedger::entries() const {
  std::lock_guard lock(mu_);
  return entries_;
}

std::size_t RunLedger::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

std::vector<LedgerEntry> RunLedger::read(const std::filesystem::path& path) {
  std::vector<LedgerEntry> out;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(LedgerEntry::from_json(nlohmann::json::parse(line)));
  }
  return out;
}

}  // namespace polypeval
