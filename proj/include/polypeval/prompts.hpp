#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "polypeval/backend.hpp"
#include "polypeval/labels.hpp"

namespace polypeval {

inline constexpr std::array<std::string_view, 4> kTemplateIds = {"simple_detect", "simple_classify", "engineered_detect",
                                                                  "engineered_classify"};

struct TurnTemplate {
  std::string text;
  bool with_image = false;
};

/// A fixed prompt protocol. Turns are sent in order within one chat; the
/// reply to `detect_turn` is scored for detection and the reply to
/// `classify_turn`, when present, for classification.
struct PromptTemplate {
  std::string id;
  std::vector<TurnTemplate> turns;
  std::size_t detect_turn = 0;
  std::optional<std::size_t> classify_turn;

  bool supports(Task task) const { return task == Task::Detect || classify_turn.has_value(); }
  std::size_t turn_for(Task task) const { return task == Task::Detect ? detect_turn : classify_turn.value(); }
};

/// Read-only after construction.
class PromptRegistry {
 public:
  /// Loads `index.json` and the turn text files next to it. Text is used
  /// byte for byte.
  static PromptRegistry load(const std::filesystem::path& index_path);
  /// Registry shipped in the asset directory (see default_asset_dir()).
  static PromptRegistry load_default();

  const PromptTemplate& get(std::string_view id) const;
  std::vector<std::string> ids() const;

  /// All user turns of the template; the image rides on the first turn.
  Conversation render(std::string_view id, ImageRef image) const;

 private:
  std::map<std::string, PromptTemplate, std::less<>> templates_;
};

/// POLYPEVAL_ASSETS when set, otherwise the asset directory of the build.
std::filesystem::path default_asset_dir();

}  // namespace polypeval
