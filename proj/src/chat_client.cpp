#include "polypeval/chat_client.hpp"

#include <chrono>

#include "polypeval/errors.hpp"

namespace polypeval {

std::optional<CacheMode> parse_cache_mode(std::string_view s) {
  if (s == "off") return CacheMode::Off;
  if (s == "readwrite" || s == "read_write" || s == "rw") return CacheMode::ReadWrite;
  if (s == "replay") return CacheMode::Replay;
  return std::nullopt;
}

std::string_view cache_mode_name(CacheMode m) {
  switch (m) {
    case CacheMode::Off: return "off";
    case CacheMode::ReadWrite: return "readwrite";
    case CacheMode::Replay: return "replay";
  }
  return "off";
}

ModelResponse ChatClient::complete(const Conversation& conv, const GenerationParams& params, std::string_view tag) {
  conv.validate();
  params.validate();

  ModelResponse resp;
  resp.backend_id = backend_->id();
  resp.params = params;
  resp.request_digest = request_digest(conv, params, resp.backend_id);

  const bool cacheable = cache_ && mode_ != CacheMode::Off && (params.seed.has_value() || mode_ == CacheMode::Replay);
  if (cacheable) {
    if (auto hit = cache_->get(resp.request_digest)) {
      resp.raw_text = std::move(*hit);
      resp.cache_hit = true;
      return resp;
    }
  }

  LedgerEntry entry;
  entry.digest = resp.request_digest;
  entry.backend_id = resp.backend_id;
  entry.tag = std::string(tag);
  const auto start = std::chrono::steady_clock::now();
  try {
    Completion c = backend_->complete(conv, params);
    resp.raw_text = std::move(c.text);
    resp.retries = c.retries;
  } catch (const BackendError& e) {
    entry.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    entry.retries = e.retries();
    entry.ok = false;
    entry.error = e.what();
    if (ledger_) ledger_->record(entry);
    throw;
  }
  resp.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  entry.latency_ms = resp.latency_ms;
  entry.retries = resp.retries;
  if (ledger_) ledger_->record(entry);

  if (cache_ && mode_ != CacheMode::Off) cache_->put(resp.request_digest, resp.backend_id, resp.raw_text);
  return resp;
}

}  // namespace polypeval
