#include "polypeval/prompts.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "polypeval/errors.hpp"

#ifndef POLYPEVAL_ASSET_DIR
#define POLYPEVAL_ASSET_DIR "assets"
#endif

namespace polypeval {

namespace {

std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("prompt asset not found: " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string legal_ids() {
  std::string out;
  for (auto id : kTemplateIds) {
    if (!out.empty()) out += ", ";
    out += id;
  }
  return out;
}

}  // namespace

std::filesystem::path default_asset_dir() {
  if (const char* env = std::getenv("POLYPEVAL_ASSETS"); env && *env) return env;
  return POLYPEVAL_ASSET_DIR;
}

PromptRegistry PromptRegistry::load(const std::filesystem::path& index_path) {
  std::ifstream in(index_path);
  if (!in) throw ConfigError("prompt index not found: " + index_path.string());
  nlohmann::json index;
  try {
    index = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("cannot parse prompt index " + index_path.string() + ": " + e.what());
  }

  PromptRegistry reg;
  const auto dir = index_path.parent_path();
  for (const auto& [id, entry] : index.items()) {
    if (std::find(kTemplateIds.begin(), kTemplateIds.end(), id) == kTemplateIds.end()) {
      throw ConfigError("prompt index declares unknown template '" + id + "' (legal: " + legal_ids() + ")");
    }
    PromptTemplate t;
    t.id = id;
    for (const auto& turn : entry.at("turns")) {
      t.turns.push_back({read_text(dir / turn.at("file").get<std::string>()), turn.value("image", false)});
    }
    t.detect_turn = entry.value("detect_turn", std::size_t{0});
    if (entry.contains("classify_turn")) t.classify_turn = entry["classify_turn"].get<std::size_t>();
    if (t.turns.empty() || t.detect_turn >= t.turns.size() || (t.classify_turn && *t.classify_turn >= t.turns.size())) {
      throw ConfigError("prompt template '" + id + "' has inconsistent turn indices");
    }
    if (std::count_if(t.turns.begin(), t.turns.end(), [](const TurnTemplate& x) { return x.with_image; }) > 1) {
      throw ConfigError("prompt template '" + id + "' attaches more than one image");
    }
    reg.templates_.emplace(id, std::move(t));
  }
  return reg;
}

PromptRegistry PromptRegistry::load_default() { return load(default_asset_dir() / "prompts" / "index.json"); }

const PromptTemplate& PromptRegistry::get(std::string_view id) const {
  auto it = templates_.find(id);
  if (it == templates_.end()) {
    throw ConfigError("unknown prompt template '" + std::string(id) + "' (legal: " + legal_ids() + ")");
  }
  return it->second;
}

std::vector<std::string> PromptRegistry::ids() const {
  std::vector<std::string> out;
  for (const auto& [id, t] : templates_) out.push_back(id);
  return out;
}

Conversation PromptRegistry::render(std::string_view id, ImageRef image) const {
  const auto& t = get(id);
  if (!image) throw ConfigError("prompt template '" + std::string(id) + "' requires an image");
  Conversation conv;
  bool attached = false;
  for (const auto& turn : t.turns) {
    Turn out{Role::User, turn.text, nullptr};
    if (!attached && (turn.with_image || &turn == &t.turns.back())) {
      out.image = image;
      attached = true;
    }
    conv.turns.push_back(std::move(out));
  }
  return conv;
}

}  // namespace polypeval
