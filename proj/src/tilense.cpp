#include "polypeval/tilense.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "polypeval/errors.hpp"
#include "polypeval/parallel.hpp"

namespace polypeval {

namespace {

int ceil_div(int a, int b) { return (a + b - 1) / b; }

}  // namespace

nlohmann::json TileGrid::to_json() const {
  nlohmann::json tiles_json = nlohmann::json::array();
  for (const auto& t : tiles) tiles_json.push_back({t.x, t.y, t.w, t.h});
  return {{"image_w", image_w},   {"image_h", image_h},   {"window_w", window_w}, {"window_h", window_h},
          {"stride_x", stride_x}, {"stride_y", stride_y}, {"tiles", tiles_json}};
}

TileGrid TileGrid::from_json(const nlohmann::json& j) {
  TileGrid g;
  g.image_w = j.at("image_w");
  g.image_h = j.at("image_h");
  g.window_w = j.at("window_w");
  g.window_h = j.at("window_h");
  g.stride_x = j.at("stride_x");
  g.stride_y = j.at("stride_y");
  for (const auto& t : j.at("tiles")) g.tiles.push_back({t.at(0), t.at(1), t.at(2), t.at(3)});
  return g;
}

TileGrid make_grid(int width, int height) {
  if (width < 4 || height < 4) {
    throw std::invalid_argument("tile grid needs an image of at least 4x4, got " + std::to_string(width) + "x" +
                                std::to_string(height));
  }
  TileGrid g;
  g.image_w = width;
  g.image_h = height;
  g.window_w = ceil_div(width, 2);
  g.window_h = ceil_div(height, 2);
  g.stride_x = ceil_div(width, 4);
  g.stride_y = ceil_div(height, 4);
  for (int row = 0; row < 3; ++row) {
    for (int col = 0; col < 3; ++col) {
      const int x = col * g.stride_x;
      const int y = row * g.stride_y;
      g.tiles.push_back({x, y, std::min(g.window_w, width - x), std::min(g.window_h, height - y)});
    }
  }
  return g;
}

std::string_view fill_name(MaskFill f) { return f == MaskFill::Black ? "black" : "mean"; }

std::optional<MaskFill> parse_fill(std::string_view s) {
  if (s == "black") return MaskFill::Black;
  if (s == "mean") return MaskFill::MeanColor;
  return std::nullopt;
}

Image mask_tile(const Image& img, const TileRect& tile, MaskFill fill) {
  if (tile.w <= 0 || tile.h <= 0 || tile.x < 0 || tile.y < 0 || tile.x + tile.w > img.width || tile.y + tile.h > img.height) {
    throw std::out_of_range("tile outside image bounds");
  }
  Rgb color{0, 0, 0};
  if (fill == MaskFill::MeanColor) {
    std::array<std::uint64_t, 3> sum{};
    for (std::size_t i = 0; i < img.pixels.size(); i += 3) {
      for (int c = 0; c < 3; ++c) sum[c] += img.pixels[i + c];
    }
    const auto n = static_cast<std::uint64_t>(img.width) * img.height;
    for (int c = 0; c < 3; ++c) color[c] = static_cast<std::uint8_t>((sum[c] + n / 2) / n);
  }
  Image out = img;
  for (int y = tile.y; y < tile.y + tile.h; ++y) {
    for (int x = tile.x; x < tile.x + tile.w; ++x) out.set(x, y, color);
  }
  return out;
}

BaseVote tally_votes(const std::vector<TaskLabel>& answers) {
  BaseVote v;
  if (answers.empty()) throw std::invalid_argument("cannot vote over zero answers");
  for (auto a : answers) ++v.votes[a];
  int best = 0;
  for (const auto& [label, count] : v.votes) best = std::max(best, count);
  std::vector<TaskLabel> leaders;
  for (const auto& [label, count] : v.votes) {
    if (count == best) leaders.push_back(label);
  }
  v.answer = *std::min_element(leaders.begin(), leaders.end(),
                               [](TaskLabel a, TaskLabel b) { return label_name(a) < label_name(b); });
  v.low_confidence = leaders.size() > 1;
  return v;
}

std::string_view normalization_name(HeatNormalization n) { return n == HeatNormalization::MeanOfCovering ? "mean" : "max"; }

std::optional<HeatNormalization> parse_normalization(std::string_view s) {
  if (s == "mean") return HeatNormalization::MeanOfCovering;
  if (s == "max") return HeatNormalization::MaxOfCovering;
  return std::nullopt;
}

TaskLabel TilenseProbe::ask(const ImageRef& image, std::string_view tag) const {
  Conversation conv;
  conv.turns.push_back({Role::User, prompt_, image});
  const auto resp = client_->complete(conv, GenerationParams::tilense(), tag);
  return to_task_label(extractor_->extract(resp.raw_text, Task::Detect, llm_), Task::Detect);
}

BaseVote vote_base_answer(const TilenseProbe& probe, const Image& img, int n_runs, std::string_view image_id,
                          std::size_t concurrency) {
  if (n_runs < 1) throw std::invalid_argument("n_runs must be at least 1");
  const ImageRef ref = attach_image(img);
  std::vector<TaskLabel> answers(static_cast<std::size_t>(n_runs));
  parallel_for(answers.size(), concurrency, [&](std::size_t k) {
    answers[k] = probe.ask(ref, std::string(image_id) + "/base/run" + std::to_string(k));
  });
  return tally_votes(answers);
}

TileScores score_tiles(const TilenseProbe& probe, const Image& img, const TileGrid& grid, const BaseVote& base, int n_runs,
                       MaskFill fill, std::string_view image_id, std::size_t concurrency) {
  if (n_runs < 1) throw std::invalid_argument("n_runs must be at least 1");
  if (grid.image_w != img.width || grid.image_h != img.height) throw std::invalid_argument("grid does not match image size");

  std::vector<ImageRef> masked;
  for (const auto& tile : grid.tiles) masked.push_back(attach_image(mask_tile(img, tile, fill)));

  const auto runs = static_cast<std::size_t>(n_runs);
  std::vector<TaskLabel> answers(grid.tiles.size() * runs);
  parallel_for(answers.size(), concurrency, [&](std::size_t job) {
    const std::size_t tile = job / runs;
    const std::size_t run = job % runs;
    answers[job] = probe.ask(masked[tile], std::string(image_id) + "/tile" + std::to_string(tile) + "/run" + std::to_string(run));
  });

  TileScores scores;
  scores.n_runs = n_runs;
  scores.base = base;
  scores.per_tile.assign(grid.tiles.size(), 0);
  for (std::size_t job = 0; job < answers.size(); ++job) {
    if (answers[job] != base.answer) ++scores.per_tile[job / runs];
  }
  return scores;
}

HeatMap pixel_heat(const TileGrid& grid, const TileScores& scores, HeatNormalization norm) {
  if (scores.per_tile.size() != grid.tiles.size()) throw std::invalid_argument("tile scores do not match the grid");
  HeatMap heat{grid.image_w, grid.image_h, std::vector<double>(static_cast<std::size_t>(grid.image_w) * grid.image_h, 0.0)};
  std::vector<int> covering(heat.values.size(), 0);
  for (std::size_t t = 0; t < grid.tiles.size(); ++t) {
    const auto& tile = grid.tiles[t];
    const double rate = static_cast<double>(scores.per_tile[t]) / scores.n_runs;
    for (int y = tile.y; y < tile.y + tile.h; ++y) {
      for (int x = tile.x; x < tile.x + tile.w; ++x) {
        const auto i = static_cast<std::size_t>(y) * grid.image_w + x;
        heat.values[i] = norm == HeatNormalization::MeanOfCovering ? heat.values[i] + rate : std::max(heat.values[i], rate);
        ++covering[i];
      }
    }
  }
  if (norm == HeatNormalization::MeanOfCovering) {
    for (std::size_t i = 0; i < heat.values.size(); ++i) {
      if (covering[i] > 0) heat.values[i] /= covering[i];
    }
  }
  return heat;
}

Image heat_colormap(const HeatMap& heat) {
  Image out(heat.width, heat.height);
  for (int y = 0; y < heat.height; ++y) {
    for (int x = 0; x < heat.width; ++x) {
      const auto fade = static_cast<std::uint8_t>(std::lround(255.0 * (1.0 - std::clamp(heat.at(x, y), 0.0, 1.0))));
      out.set(x, y, {255, fade, fade});
    }
  }
  return out;
}

Image render_overlay(const Image& img, const HeatMap& heat, double opacity) {
  if (img.width != heat.width || img.height != heat.height) throw std::invalid_argument("heat map does not match image size");
  const Image colors = heat_colormap(heat);
  Image out = img;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const double alpha = std::clamp(opacity, 0.0, 1.0) * std::clamp(heat.at(x, y), 0.0, 1.0);
      if (alpha == 0.0) continue;
      const Rgb base = img.pixel(x, y);
      const Rgb tint = colors.pixel(x, y);
      Rgb blended;
      for (int c = 0; c < 3; ++c) blended[c] = static_cast<std::uint8_t>(std::lround((1.0 - alpha) * base[c] + alpha * tint[c]));
      out.set(x, y, blended);
    }
  }
  return out;
}

TilenseResult run_tilense(const TilenseProbe& probe, const Image& img, std::string_view image_id, const TilenseOptions& opts) {
  TilenseResult r;
  r.image_id = std::string(image_id);
  r.grid = make_grid(img.width, img.height);
  const BaseVote base = vote_base_answer(probe, img, opts.n_runs, image_id, opts.concurrency);
  r.scores = score_tiles(probe, img, r.grid, base, opts.n_runs, opts.fill, image_id, opts.concurrency);
  r.heat = pixel_heat(r.grid, r.scores, opts.normalization);
  return r;
}

nlohmann::json sidecar_json(const TilenseResult& r, const TilenseOptions& opts) {
  nlohmann::json votes = nlohmann::json::object();
  for (const auto& [label, count] : r.scores.base.votes) votes[std::string(label_name(label))] = count;
  return {{"image_id", r.image_id},
          {"prompt", opts.prompt_id},
          {"n_runs", r.scores.n_runs},
          {"fill", std::string(fill_name(opts.fill))},
          {"normalization", std::string(normalization_name(opts.normalization))},
          {"overlay_opacity", opts.overlay_opacity},
          {"generation", GenerationParams::tilense().to_json()},
          {"grid", r.grid.to_json()},
          {"base_answer", std::string(label_name(r.scores.base.answer))},
          {"base_votes", votes},
          {"low_confidence", r.scores.base.low_confidence},
          {"per_tile", r.scores.per_tile}};
}

TilenseFiles write_tilense_outputs(const std::filesystem::path& out_dir, const Image& img, const TilenseResult& r,
                                   const TilenseOptions& opts) {
  std::filesystem::create_directories(out_dir);
  TilenseFiles files{out_dir / (r.image_id + ".tilense.png"), out_dir / (r.image_id + ".tilense.heat.png"),
                     out_dir / (r.image_id + ".tilense.json")};
  write_png(render_overlay(img, r.heat, opts.overlay_opacity), files.overlay);
  write_png(heat_colormap(r.heat), files.heat);
  std::ofstream out(files.sidecar, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + files.sidecar.string());
  out << sidecar_json(r, opts).dump(2) << '\n';
  if (!out) throw IoError("write failed for " + files.sidecar.string());
  return files;
}

}  // namespace polypeval
