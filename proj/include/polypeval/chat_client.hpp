#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "polypeval/backend.hpp"
#include "polypeval/cache.hpp"
#include "polypeval/ledger.hpp"

namespace polypeval {

enum class CacheMode {
  Off,        // never read or write
  ReadWrite,  // seeded requests are served from cache; every live reply is stored
  Replay,     // every request, seeded or not, is served from cache when present
};

std::optional<CacheMode> parse_cache_mode(std::string_view s);
std::string_view cache_mode_name(CacheMode m);

/// Front door to a backend: request digests, response cache, run ledger.
class ChatClient {
 public:
  ChatClient(Backend& backend, ResponseCache* cache, RunLedger* ledger, CacheMode mode = CacheMode::ReadWrite)
      : backend_(&backend), cache_(cache), ledger_(ledger), mode_(mode) {}

  /// Every live call, successful or not, is written to the ledger once.
  ModelResponse complete(const Conversation& conv, const GenerationParams& params, std::string_view tag = {});

  Backend& backend() const { return *backend_; }

 private:
  Backend* backend_;
  ResponseCache* cache_;
  RunLedger* ledger_;
  CacheMode mode_;
};

}  // namespace polypeval
