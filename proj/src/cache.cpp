#include "polypeval/cache.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "polypeval/errors.hpp"

namespace fs = std::filesystem;

namespace polypeval {

ResponseCache::ResponseCache(fs::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (!fs::is_directory(dir_)) throw IoError("cache directory unusable: " + dir_.string());
}

fs::path ResponseCache::entry_path(const std::string& digest) const { return dir_ / (digest + ".json"); }

std::optional<std::string> ResponseCache::get(const std::string& digest) const {
  const auto path = entry_path(digest);
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    const auto j = nlohmann::json::parse(ss.str());
    if (j.at("digest").get<std::string>() != digest) {
      spdlog::warn("cache entry {} has mismatched digest; ignoring", path.string());
      return std::nullopt;
    }
    return j.at("raw_text").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    spdlog::warn("corrupt cache entry {}: {}; treating as miss", path.string(), e.what());
    return std::nullopt;
  }
}

void ResponseCache::put(const std::string& digest, const std::string& backend_id, const std::string& text) {
  const nlohmann::json j{{"digest", digest}, {"backend", backend_id}, {"raw_text", text}};
  std::lock_guard lock(write_mu_);
  const auto target = entry_path(digest);
  const auto tmp = fs::path(target).concat(".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write cache entry " + tmp.string());
    out << j.dump();
  }
  fs::rename(tmp, target);
}

}  // namespace polypeval
