#pragma once

#include <atomic>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "polypeval/backend.hpp"

namespace polypeval {

/// Deterministic offline backend.
///
/// Resolution order: exact digest script, then the responder callback, then
/// the first matching rule, then the default reply. In strict mode only the
/// digest script is consulted and anything else fails as unscripted.
class ScriptedBackend final : public Backend {
 public:
  using Responder = std::function<std::optional<std::string>(const Conversation&, const GenerationParams&)>;

  struct Rule {
    std::optional<std::string> prompt_contains;  // substring of the last user turn
    std::optional<std::pair<int, int>> pixel;    // probe location in the attached image
    Rgb pixel_equals{0, 0, 0};
    std::string reply;

    bool matches(const Conversation& conv) const;
  };

  explicit ScriptedBackend(std::string id, bool strict = false) : id_(std::move(id)), strict_(strict) {}

  /// Builds from a `{"type": "mock", ...}` backend config.
  static std::unique_ptr<ScriptedBackend> from_json(const nlohmann::json& j);

  const std::string& id() const override { return id_; }
  Completion complete(const Conversation& conv, const GenerationParams& params) override;

  void script(const std::string& digest, std::string reply) { script_[digest] = std::move(reply); }
  void set_responder(Responder r) { responder_ = std::move(r); }
  void add_rule(Rule r) { rules_.push_back(std::move(r)); }
  void set_default(std::string reply) { default_ = std::move(reply); }

  std::size_t calls() const { return calls_.load(); }

 private:
  std::string id_;
  bool strict_;
  std::map<std::string, std::string> script_;
  Responder responder_;
  std::vector<Rule> rules_;
  std::optional<std::string> default_;
  std::atomic<std::size_t> calls_{0};
};

}  // namespace polypeval
