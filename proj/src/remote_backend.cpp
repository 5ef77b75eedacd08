#include "polypeval/remote_backend.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <regex>

#include <httplib.h>

#include "polypeval/errors.hpp"
#include "polypeval/mock_backend.hpp"

namespace polypeval {

namespace {

bool render_into(const nlohmann::json& tmpl, const std::map<std::string, nlohmann::json>& vars, nlohmann::json& out) {
  if (tmpl.is_string()) {
    const std::string s = tmpl.get<std::string>();
    static const std::regex whole(R"(^\{\{([a-z_0-9]+)\}\}$)");
    std::smatch m;
    if (std::regex_match(s, m, whole)) {
      auto it = vars.find(m[1].str());
      if (it == vars.end() || it->second.is_null()) return false;
      out = it->second;
      return true;
    }
    std::string result = s;
    for (const auto& [name, value] : vars) {
      const std::string marker = "{{" + name + "}}";
      const std::string text = value.is_string() ? value.get<std::string>() : value.dump();
      for (auto pos = result.find(marker); pos != std::string::npos; pos = result.find(marker, pos + text.size())) {
        result.replace(pos, marker.size(), text);
      }
    }
    out = result;
    return true;
  }
  if (tmpl.is_object()) {
    out = nlohmann::json::object();
    for (const auto& [key, value] : tmpl.items()) {
      nlohmann::json rendered;
      if (render_into(value, vars, rendered)) out[key] = std::move(rendered);
    }
    return true;
  }
  if (tmpl.is_array()) {
    out = nlohmann::json::array();
    for (const auto& value : tmpl) {
      nlohmann::json rendered;
      if (render_into(value, vars, rendered)) out.push_back(std::move(rendered));
    }
    return true;
  }
  out = tmpl;
  return true;
}

bool is_transient(int status) { return status == 408 || status == 429 || (status >= 500 && status <= 599); }

}  // namespace

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(), static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

nlohmann::json render_template(const nlohmann::json& tmpl, const std::map<std::string, nlohmann::json>& vars) {
  nlohmann::json out;
  if (!render_into(tmpl, vars, out)) return nullptr;
  return out;
}

RemoteBackendConfig RemoteBackendConfig::from_json(const nlohmann::json& j) {
  try {
    RemoteBackendConfig c;
    c.backend_id = j.at("backend_id").get<std::string>();
    c.endpoint = j.at("endpoint").get<std::string>();
    c.auth_env = j.value("auth_env", "");
    c.auth_header = j.value("auth_header", c.auth_header);
    c.auth_prefix = j.value("auth_prefix", c.auth_prefix);
    if (j.contains("headers")) c.headers = j["headers"].get<std::map<std::string, std::string>>();
    c.request_template = j.at("request_template");
    c.message_template = j.value("message_template", nlohmann::json{{"role", "{{role}}"}, {"content", "{{parts}}"}});
    c.text_part_template = j.value("text_part_template", nlohmann::json{{"type", "text"}, {"text", "{{text}}"}});
    c.image_part_template = j.at("image_part_template");
    c.image_first = j.value("image_first", false);
    c.response_text_path = j.at("response_text_path").get<std::string>();
    c.rate_limit_rpm = j.value("rate_limit_rpm", c.rate_limit_rpm);
    c.retry_cap = j.value("retry_cap", c.retry_cap);
    c.timeout_s = j.value("timeout_s", c.timeout_s);
    c.backoff_base_ms = j.value("backoff_base_ms", c.backoff_base_ms);
    c.backoff_max_ms = j.value("backoff_max_ms", c.backoff_max_ms);
    if (c.rate_limit_rpm <= 0 || c.retry_cap < 0 || c.timeout_s <= 0) throw ConfigError("remote backend limits must be positive");
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid remote backend config: ") + e.what());
  }
}

RemoteBackend::RemoteBackend(RemoteBackendConfig cfg, Clock& clock)
    : cfg_(std::move(cfg)), clock_(&clock), limiter_(cfg_.rate_limit_rpm, std::chrono::minutes(1), clock) {
  static const std::regex url(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(cfg_.endpoint, m, url)) throw ConfigError("invalid endpoint URL: " + cfg_.endpoint);
  scheme_host_port_ = m[1].str();
  path_ = m[2].matched ? m[2].str() : "/";
}

nlohmann::json RemoteBackend::build_request(const Conversation& conv, const GenerationParams& params) const {
  nlohmann::json messages = nlohmann::json::array();
  for (const auto& turn : conv.turns) {
    nlohmann::json parts = nlohmann::json::array();
    nlohmann::json text_part = render_template(cfg_.text_part_template, {{"text", turn.text}});
    nlohmann::json image_part;
    if (turn.image) {
      image_part = render_template(cfg_.image_part_template, {{"media_type", turn.image->media_type},
                                                              {"image_base64", base64_encode(turn.image->encoded)}});
    }
    if (turn.image && cfg_.image_first) parts.push_back(image_part);
    parts.push_back(text_part);
    if (turn.image && !cfg_.image_first) parts.push_back(image_part);
    messages.push_back(render_template(cfg_.message_template, {{"role", turn.role == Role::User ? "user" : "assistant"},
                                                               {"parts", parts}}));
  }
  return render_template(cfg_.request_template,
                         {{"messages", messages},
                          {"temperature", params.temperature},
                          {"max_tokens", params.max_tokens},
                          {"seed", params.seed ? nlohmann::json(*params.seed) : nlohmann::json(nullptr)}});
}

std::string RemoteBackend::parse_reply(const std::string& body) const {
  try {
    const auto j = nlohmann::json::parse(body);
    const auto& node = j.at(nlohmann::json::json_pointer(cfg_.response_text_path));
    if (!node.is_string()) throw BackendError(BackendError::Kind::Malformed, "reply text at " + cfg_.response_text_path + " is not a string");
    return node.get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw BackendError(BackendError::Kind::Malformed, std::string("malformed reply from ") + cfg_.backend_id + ": " + e.what());
  }
}

Completion RemoteBackend::complete(const Conversation& conv, const GenerationParams& params) {
  httplib::Headers headers;
  for (const auto& [k, v] : cfg_.headers) headers.emplace(k, v);
  if (!cfg_.auth_env.empty()) {
    const char* secret = std::getenv(cfg_.auth_env.c_str());
    if (!secret || !*secret) {
      throw BackendError(BackendError::Kind::Auth, "credential variable " + cfg_.auth_env + " is not set");
    }
    headers.emplace(cfg_.auth_header, cfg_.auth_prefix + secret);
  }
  const std::string body = build_request(conv, params).dump();

  const auto timeout = std::chrono::duration<double>(cfg_.timeout_s);
  std::string last_failure;
  BackendError::Kind exhausted_kind = BackendError::Kind::RetriesExhausted;
  for (int attempt = 0;; ++attempt) {
    limiter_.acquire();
    httplib::Client client(scheme_host_port_);
    client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    client.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    auto res = client.Post(path_, headers, body, "application/json");

    std::chrono::milliseconds wait{0};
    if (!res) {
      const auto err = res.error();
      if (err != httplib::Error::Read && err != httplib::Error::Write && err != httplib::Error::ConnectionTimeout) {
        throw BackendError(BackendError::Kind::Network, cfg_.backend_id + ": " + httplib::to_string(err), attempt);
      }
      last_failure = "timeout (" + httplib::to_string(err) + ")";
      exhausted_kind = BackendError::Kind::Timeout;
    } else if (res->status >= 200 && res->status < 300) {
      return {parse_reply(res->body), attempt};
    } else if (res->status == 401 || res->status == 403) {
      throw BackendError(BackendError::Kind::Auth, cfg_.backend_id + ": HTTP " + std::to_string(res->status), attempt);
    } else if (is_transient(res->status)) {
      last_failure = "HTTP " + std::to_string(res->status);
      exhausted_kind = BackendError::Kind::RetriesExhausted;
      if (res->has_header("Retry-After")) {
        try {
          wait = std::chrono::seconds(std::stoi(res->get_header_value("Retry-After")));
        } catch (const std::exception&) {
        }
      }
    } else {
      throw BackendError(BackendError::Kind::Rejected,
                         cfg_.backend_id + ": HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200), attempt);
    }

    if (attempt >= cfg_.retry_cap) {
      throw BackendError(exhausted_kind,
                         cfg_.backend_id + ": giving up after " + std::to_string(attempt) + " retries; last failure " + last_failure,
                         attempt);
    }
    const auto backoff = std::chrono::milliseconds(
        std::min<long long>(static_cast<long long>(cfg_.backoff_base_ms) << std::min(attempt, 20), cfg_.backoff_max_ms));
    clock_->sleep_for(std::min<std::chrono::milliseconds>(std::max(backoff, wait), std::chrono::milliseconds(cfg_.backoff_max_ms)));
  }
}

std::unique_ptr<Backend> load_backend(const nlohmann::json& j, Clock& clock) {
  const std::string type = j.value("type", "remote");
  if (type == "mock") return ScriptedBackend::from_json(j);
  if (type == "remote") return std::make_unique<RemoteBackend>(RemoteBackendConfig::from_json(j), clock);
  throw ConfigError("unknown backend type '" + type + "' (expected mock or remote)");
}

std::unique_ptr<Backend> load_backend_file(const std::filesystem::path& path, Clock& clock) {
  std::ifstream in(path);
  if (!in) throw ConfigError("backend config not found: " + path.string());
  try {
    return load_backend(nlohmann::json::parse(in), clock);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("cannot parse backend config " + path.string() + ": " + e.what());
  }
}

}  // namespace polypeval
