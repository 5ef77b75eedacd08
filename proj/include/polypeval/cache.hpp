#pragma once

#include <filesystem>
#include <mutex>
#include <optional>
#include <string>

namespace polypeval {

/// One JSON file per request digest. Unreadable or mismatched entries are
/// reported as misses.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir);

  std::optional<std::string> get(const std::string& digest) const;
  void put(const std::string& digest, const std::string& backend_id, const std::string& text);
  std::filesystem::path entry_path(const std::string& digest) const;

 private:
  std::filesystem::path dir_;
  std::mutex write_mu_;
};

}  // namespace polypeval
