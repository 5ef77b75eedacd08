#include "polypeval/mock_backend.hpp"

#include "polypeval/errors.hpp"

namespace polypeval {

bool ScriptedBackend::Rule::matches(const Conversation& conv) const {
  if (prompt_contains) {
    const Turn* last_user = nullptr;
    for (const auto& t : conv.turns) {
      if (t.role == Role::User) last_user = &t;
    }
    if (!last_user || last_user->text.find(*prompt_contains) == std::string::npos) return false;
  }
  if (pixel) {
    auto img = conv.image();
    if (!img) return false;
    const auto [x, y] = *pixel;
    if (x < 0 || y < 0 || x >= img->pixels.width || y >= img->pixels.height) return false;
    if (img->pixels.pixel(x, y) != pixel_equals) return false;
  }
  return true;
}

std::unique_ptr<ScriptedBackend> ScriptedBackend::from_json(const nlohmann::json& j) {
  try {
    auto b = std::make_unique<ScriptedBackend>(j.at("backend_id").get<std::string>(), j.value("strict", false));
    if (j.contains("script")) {
      for (const auto& [digest, reply] : j["script"].items()) b->script(digest, reply.get<std::string>());
    }
    if (j.contains("rules")) {
      for (const auto& r : j["rules"]) {
        Rule rule;
        if (r.contains("prompt_contains")) rule.prompt_contains = r["prompt_contains"].get<std::string>();
        if (r.contains("pixel")) rule.pixel = std::make_pair(r["pixel"].at(0).get<int>(), r["pixel"].at(1).get<int>());
        if (r.contains("pixel_equals")) {
          for (int c = 0; c < 3; ++c) rule.pixel_equals[c] = r["pixel_equals"].at(c).get<std::uint8_t>();
        }
        rule.reply = r.at("reply").get<std::string>();
        b->add_rule(std::move(rule));
      }
    }
    if (j.contains("default")) b->set_default(j["default"].get<std::string>());
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid mock backend config: ") + e.what());
  }
}

Completion ScriptedBackend::complete(const Conversation& conv, const GenerationParams& params) {
  ++calls_;
  const std::string digest = request_digest(conv, params, id_);
  if (auto it = script_.find(digest); it != script_.end()) return {it->second, 0};
  if (strict_) throw BackendError(BackendError::Kind::Unscripted, "unscripted request " + digest);

  if (responder_) {
    if (auto reply = responder_(conv, params)) return {std::move(*reply), 0};
  }
  for (const auto& rule : rules_) {
    if (rule.matches(conv)) return {rule.reply, 0};
  }
  if (default_) return {*default_, 0};
  throw BackendError(BackendError::Kind::Unscripted, "unscripted request " + digest);
}

}  // namespace polypeval
