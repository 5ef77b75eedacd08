#include "polypeval/backend.hpp"

#include <fstream>
#include <iterator>
#include <stdexcept>

#include "polypeval/errors.hpp"
#include "polypeval/hash.hpp"
#include "polypeval/preprocess.hpp"

namespace polypeval {

void GenerationParams::validate() const {
  if (!(temperature >= 0.0)) throw ConfigError("temperature must be >= 0");
  if (max_tokens <= 0) throw ConfigError("max_tokens must be positive");
}

nlohmann::json GenerationParams::to_json() const {
  nlohmann::json j{{"temperature", temperature}, {"max_tokens", max_tokens}};
  j["seed"] = seed ? nlohmann::json(*seed) : nlohmann::json(nullptr);
  return j;
}

GenerationParams GenerationParams::from_json(const nlohmann::json& j) {
  GenerationParams p;
  p.temperature = j.value("temperature", p.temperature);
  p.max_tokens = j.value("max_tokens", p.max_tokens);
  if (j.contains("seed") && !j["seed"].is_null()) p.seed = j["seed"].get<std::int64_t>();
  p.validate();
  return p;
}

ImageRef attach_image(Image img) {
  auto a = std::make_shared<ImageAttachment>();
  a->encoded = encode_png(img);
  a->media_type = "image/png";
  a->digest = image_digest(img);
  a->pixels = std::move(img);
  return a;
}

ImageRef attach_file(const std::filesystem::path& path, bool resize) {
  Image img = read_image(path);
  if (resize) return attach_image(resize_standard(img));

  auto a = std::make_shared<ImageAttachment>();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  a->encoded.assign(std::istreambuf_iterator<char>(in), {});
  auto ext = path.extension().string();
  for (auto& ch : ext) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  a->media_type = (ext == ".jpg" || ext == ".jpeg") ? "image/jpeg" : "image/png";
  if (ext != ".png" && ext != ".jpg" && ext != ".jpeg") {
    a->encoded = encode_png(img);
    a->media_type = "image/png";
  }
  a->digest = image_digest(img);
  a->pixels = std::move(img);
  return a;
}

void Conversation::validate() const {
  if (turns.empty()) throw std::invalid_argument("conversation has no turns");
  int images = 0;
  for (const auto& t : turns) {
    if (t.text.empty()) throw std::invalid_argument("conversation turn with empty text");
    if (t.image) ++images;
  }
  if (images > 1) throw std::invalid_argument("conversation carries more than one image");
}

ImageRef Conversation::image() const {
  for (const auto& t : turns) {
    if (t.image) return t.image;
  }
  return nullptr;
}

std::string request_digest(const Conversation& conv, const GenerationParams& params, const std::string& backend_id) {
  nlohmann::json turns = nlohmann::json::array();
  for (const auto& t : conv.turns) {
    turns.push_back({{"role", t.role == Role::User ? "user" : "assistant"},
                     {"text", t.text},
                     {"image", t.image ? nlohmann::json(t.image->digest) : nlohmann::json(nullptr)}});
  }
  const nlohmann::json canonical{{"backend", backend_id}, {"params", params.to_json()}, {"turns", turns}};
  return sha256_hex(canonical.dump());
}

}  // namespace polypeval
