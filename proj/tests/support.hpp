#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "polypeval/dataset.hpp"
#include "polypeval/extraction.hpp"
#include "polypeval/image.hpp"
#include "polypeval/labels.hpp"
#include "polypeval/mock_backend.hpp"

namespace testsupport {

namespace fs = std::filesystem;
using namespace polypeval;

/// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
  fs::path path;
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  fs::path operator/(const std::string& name) const { return path / name; }
};

Image solid(int w, int h, Rgb color);
Image noise_image(int w, int h, std::uint64_t seed);

/// n synthetic PNGs plus manifest.csv under dir. Even records are polyps
/// with classes cycling AC..IP, odd records are normal. Every image has a
/// distinct color so its digest identifies the record.
fs::path write_manifest(const fs::path& dir, int n, int size = 32);

/// The seven numbered options of the engineered classification prompt.
const std::array<std::pair<std::string, PathologyClass>, 7>& option_strings();
std::string option_string(PathologyClass c);

/// Answers like an oracle: detection from presence, classification with the
/// verbatim option string of the true class. Keyed by image digest.
void script_oracle(ScriptedBackend& backend, const DatasetManifest& manifest);

/// Reports a polyp unless pixel (x, y) has been blacked out.
void make_point_sensitive(ScriptedBackend& backend, int x, int y);

/// Text of the first turn of a registered prompt template.
std::string prompt_text(const std::string& template_id);

struct CorpusItem {
  enum class Kind { Unambiguous, MultiClass, Hedged };
  std::string text;
  Task task = Task::Detect;
  Kind kind = Kind::Unambiguous;
  Category expected = Category::NeedsHumanUnsure;
  std::optional<PathologyClass> pathology;
};

/// 30 unambiguous, 15 multi-class and 15 hedged answers.
const std::vector<CorpusItem>& extraction_corpus();

}  // namespace testsupport
