#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "polypeval/backend.hpp"
#include "polypeval/clock.hpp"
#include "polypeval/rate_limiter.hpp"

namespace polypeval {

/// Provider-neutral description of a chat-with-image HTTP API.
///
/// Templates are JSON documents whose string leaves may contain
/// `{{placeholder}}` markers. A leaf that is exactly one marker is replaced by
/// the typed value (numbers stay numbers); a marker whose value is absent
/// (e.g. `{{seed}}` without a seed) removes the enclosing key.
///
/// request_template placeholders: messages, temperature, max_tokens, seed.
/// message_template: role, parts. text_part_template: text.
/// image_part_template: media_type, image_base64.
struct RemoteBackendConfig {
  std::string backend_id;
  std::string endpoint;
  std::string auth_env;
  std::string auth_header = "Authorization";
  std::string auth_prefix = "Bearer ";
  std::map<std::string, std::string> headers;
  nlohmann::json request_template;
  nlohmann::json message_template;
  nlohmann::json text_part_template;
  nlohmann::json image_part_template;
  bool image_first = false;
  std::string response_text_path;  // JSON pointer into the reply body
  int rate_limit_rpm = 60;
  int retry_cap = 5;
  double timeout_s = 120.0;
  int backoff_base_ms = 1000;
  int backoff_max_ms = 60000;

  static RemoteBackendConfig from_json(const nlohmann::json& j);
};

class RemoteBackend final : public Backend {
 public:
  explicit RemoteBackend(RemoteBackendConfig cfg, Clock& clock = SteadyClock::instance());

  const std::string& id() const override { return cfg_.backend_id; }
  Completion complete(const Conversation& conv, const GenerationParams& params) override;

  /// The JSON body that would be POSTed for this request.
  nlohmann::json build_request(const Conversation& conv, const GenerationParams& params) const;
  /// Extracts the reply text; throws BackendError(Malformed).
  std::string parse_reply(const std::string& body) const;

 private:
  RemoteBackendConfig cfg_;
  Clock* clock_;
  RateLimiter limiter_;
  std::string scheme_host_port_;
  std::string path_;
};

std::string base64_encode(const std::vector<std::uint8_t>& bytes);

/// Substitutes `{{name}}` markers; see RemoteBackendConfig.
nlohmann::json render_template(const nlohmann::json& tmpl, const std::map<std::string, nlohmann::json>& vars);

/// Reads a backend config file and instantiates either a mock or a remote
/// backend depending on its `type` field.
std::unique_ptr<Backend> load_backend(const nlohmann::json& j, Clock& clock = SteadyClock::instance());
std::unique_ptr<Backend> load_backend_file(const std::filesystem::path& path, Clock& clock = SteadyClock::instance());

}  // namespace polypeval
