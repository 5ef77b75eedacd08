#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "polypeval/image.hpp"

namespace polypeval {

struct GenerationParams {
  double temperature = 1.0;
  int max_tokens = 512;
  std::optional<std::int64_t> seed;

  /// Evaluation runs: temperature 1.0, 512 tokens, seed 123.
  static GenerationParams evaluation() { return {1.0, 512, 123}; }
  /// Tile-occlusion sampling: temperature 1.0, 300 tokens, no seed.
  static GenerationParams tilense() { return {1.0, 300, std::nullopt}; }
  /// Structured extraction: temperature 0.
  static GenerationParams extraction() { return {0.0, 512, 123}; }

  void validate() const;
  nlohmann::json to_json() const;
  static GenerationParams from_json(const nlohmann::json& j);
};

/// An image as sent to a backend. `encoded` holds the file bytes (the
/// original file when sent as-is, PNG otherwise); `digest` is the content
/// hash of the decoded pixels.
struct ImageAttachment {
  Image pixels;
  std::vector<std::uint8_t> encoded;
  std::string media_type;
  std::string digest;
};

using ImageRef = std::shared_ptr<const ImageAttachment>;

ImageRef attach_image(Image img);
/// Loads a file; with `resize` the image is standardized and re-encoded as
/// PNG, otherwise the original bytes are kept.
ImageRef attach_file(const std::filesystem::path& path, bool resize);

enum class Role { User, Assistant };

struct Turn {
  Role role = Role::User;
  std::string text;
  ImageRef image;
};

struct Conversation {
  std::vector<Turn> turns;

  /// At least one turn, non-empty text, at most one image.
  void validate() const;
  ImageRef image() const;
};

struct ModelResponse {
  std::string raw_text;
  std::string backend_id;
  GenerationParams params;
  double latency_ms = 0.0;
  bool cache_hit = false;
  int retries = 0;
  std::string request_digest;
};

/// Content hash of (conversation, params, backend id). Stable across runs.
std::string request_digest(const Conversation& conv, const GenerationParams& params, const std::string& backend_id);

/// Raw result of one backend call.
struct Completion {
  std::string text;
  int retries = 0;
};

/// A chat-with-image backend. Implementations must be safe for concurrent use.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual const std::string& id() const = 0;
  /// Throws BackendError on failure.
  virtual Completion complete(const Conversation& conv, const GenerationParams& params) = 0;
};

}  // namespace polypeval
