#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "polypeval/chat_client.hpp"
#include "polypeval/extraction.hpp"
#include "polypeval/image.hpp"

namespace polypeval {

struct TileRect {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  bool contains(int px, int py) const { return px >= x && px < x + w && py >= y && py < y + h; }
  bool operator==(const TileRect&) const = default;
};

struct TileGrid {
  int image_w = 0;
  int image_h = 0;
  int window_w = 0;
  int window_h = 0;
  int stride_x = 0;
  int stride_y = 0;
  std::vector<TileRect> tiles;  // row-major over the 3x3 positions

  nlohmann::json to_json() const;
  static TileGrid from_json(const nlohmann::json& j);
  bool operator==(const TileGrid&) const = default;
};

/// 3x3 overlapping tiles: window ceil(dim/2), stride ceil(dim/4), offsets
/// {0, stride, 2*stride} per axis. Tiles reaching past the border are
/// clipped. Throws std::invalid_argument when either side is below 4.
TileGrid make_grid(int width, int height);

enum class MaskFill { Black, MeanColor };
std::string_view fill_name(MaskFill f);
std::optional<MaskFill> parse_fill(std::string_view s);

/// Pixels inside the tile are replaced; all others are left untouched.
/// Throws std::out_of_range for a tile outside the image.
Image mask_tile(const Image& img, const TileRect& tile, MaskFill fill);

struct BaseVote {
  TaskLabel answer = TaskLabel::NoAnswer;
  std::map<TaskLabel, int> votes;
  bool low_confidence = false;
};

/// Majority vote; ties go to the lexicographically smallest label name and
/// set low_confidence.
BaseVote tally_votes(const std::vector<TaskLabel>& answers);

struct TileScores {
  int n_runs = 5;
  BaseVote base;
  std::vector<int> per_tile;  // flips per tile, each in [0, n_runs]
};

enum class HeatNormalization { MeanOfCovering, MaxOfCovering };
std::string_view normalization_name(HeatNormalization n);
std::optional<HeatNormalization> parse_normalization(std::string_view s);

struct HeatMap {
  int width = 0;
  int height = 0;
  std::vector<double> values;  // row-major, each in [0, 1]

  double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

/// Asks a backend about one image under the tile-occlusion protocol and
/// reduces each answer to a detection label.
class TilenseProbe {
 public:
  TilenseProbe(ChatClient& client, const Extractor& extractor, std::string prompt_text, ChatClient* llm_extractor = nullptr)
      : client_(&client), extractor_(&extractor), prompt_(std::move(prompt_text)), llm_(llm_extractor) {}

  TaskLabel ask(const ImageRef& image, std::string_view tag) const;

 private:
  ChatClient* client_;
  const Extractor* extractor_;
  std::string prompt_;
  ChatClient* llm_;
};

BaseVote vote_base_answer(const TilenseProbe& probe, const Image& img, int n_runs, std::string_view image_id = "image",
                          std::size_t concurrency = 1);

/// n_runs masked queries per tile; each answer differing from the base
/// answer scores one point.
TileScores score_tiles(const TilenseProbe& probe, const Image& img, const TileGrid& grid, const BaseVote& base, int n_runs,
                       MaskFill fill = MaskFill::Black, std::string_view image_id = "image", std::size_t concurrency = 1);

HeatMap pixel_heat(const TileGrid& grid, const TileScores& scores,
                   HeatNormalization norm = HeatNormalization::MeanOfCovering);

/// White (heat 0) to saturated red (heat 1).
Image heat_colormap(const HeatMap& heat);
/// Alpha-blends the colormap over the image with per-pixel alpha
/// opacity * heat, so zero heat leaves the image unchanged.
Image render_overlay(const Image& img, const HeatMap& heat, double opacity = 0.6);

struct TilenseOptions {
  int n_runs = 5;
  MaskFill fill = MaskFill::Black;
  HeatNormalization normalization = HeatNormalization::MeanOfCovering;
  double overlay_opacity = 0.6;
  std::size_t concurrency = 1;
  std::string prompt_id = "engineered_detect";
};

struct TilenseResult {
  std::string image_id;
  TileGrid grid;
  TileScores scores;
  HeatMap heat;
};

TilenseResult run_tilense(const TilenseProbe& probe, const Image& img, std::string_view image_id, const TilenseOptions& opts);

nlohmann::json sidecar_json(const TilenseResult& r, const TilenseOptions& opts);

struct TilenseFiles {
  std::filesystem::path overlay;  // <id>.tilense.png
  std::filesystem::path heat;     // <id>.tilense.heat.png
  std::filesystem::path sidecar;  // <id>.tilense.json
};

TilenseFiles write_tilense_outputs(const std::filesystem::path& out_dir, const Image& img, const TilenseResult& r,
                                   const TilenseOptions& opts);

}  // namespace polypeval
