#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "polypeval/backend.hpp"
#include "polypeval/chat_client.hpp"
#include "polypeval/dataset.hpp"
#include "polypeval/extraction.hpp"
#include "polypeval/labels.hpp"

namespace polypeval {

enum class TaskSelection { Detect, Classify, Both };
std::string_view task_selection_name(TaskSelection t);
std::optional<TaskSelection> parse_task_selection(std::string_view s);

struct RunConfig {
  std::filesystem::path manifest;
  std::vector<nlohmann::json> backends;  // backend configs, files already inlined
  std::vector<std::string> templates;
  TaskSelection task = TaskSelection::Both;
  std::string preset = "evaluation";
  std::optional<SplitTag> split;  // nullopt = all
  std::uint64_t seed = 123;
  std::size_t concurrency = 1;
  CacheMode cache_mode = CacheMode::ReadWrite;
  std::optional<std::filesystem::path> cache_dir;  // defaults to <out_dir>/cache
  std::filesystem::path out_dir = "out";
  bool resize = false;
  bool shared_chat = true;  // one chat per (image, template) vs one chat per task
  std::optional<nlohmann::json> extraction_backend;

  /// Throws ConfigError naming the offending field.
  void validate() const;
  /// Generation parameters of the preset; a seeded preset takes `seed`.
  GenerationParams params() const;
  nlohmann::json to_json() const;
  /// SHA-256 of the canonical JSON form, ignoring fields that do not change
  /// results (concurrency, cache settings, out_dir).
  std::string hash() const;

  /// Relative paths (manifest, backend files, dirs) resolve against base_dir.
  static RunConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static RunConfig load(const std::filesystem::path& path);
};

struct TaskAnswer {
  std::string digest;
  std::string raw_text;
  ExtractionOutcome outcome;
  TaskLabel label = TaskLabel::NoAnswer;
};

struct ResultRow {
  std::string image_id;
  std::string backend_id;
  std::string template_id;
  bool presence = false;
  PathologyClass truth = PathologyClass::Normal;
  bool ok = true;
  std::string error;
  std::optional<TaskAnswer> detect;
  std::optional<TaskAnswer> classify;

  nlohmann::json to_json() const;
  static ResultRow from_json(const nlohmann::json& j);
};

struct RunResult {
  std::string config_hash;
  std::vector<ResultRow> rows;  // canonical (image, backend, template) order
  bool complete = true;         // false when a row budget stopped the run
  std::size_t live_calls = 0;   // ledgered calls of this invocation

  std::size_t failed() const;
  std::vector<std::string> backend_ids() const;
  std::vector<std::string> template_ids() const;
  /// Rows of one template only.
  RunResult select_template(std::string_view template_id) const;
};

struct RunOptions {
  /// Stop after this many newly evaluated rows, as if interrupted.
  std::optional<std::size_t> row_budget;
  /// Backends used in place of config entries with the same backend_id.
  std::vector<Backend*> backends;
};

/// Evaluates every (image, backend, template) triple. Rows are appended to
/// <out_dir>/results.jsonl as they finish; rows already present and ok are
/// skipped, so a rerun resumes an interrupted run. Backend failures mark
/// the row failed. Throws ConfigError for an invalid config and
/// UnreachableError when every row failed.
RunResult run_evaluation(const RunConfig& cfg, const RunOptions& opts = {});

/// Loads the persisted rows of a run directory in canonical order.
RunResult load_run(const std::filesystem::path& out_dir);

/// Percent change (eng - simple) / simple * 100; nullopt when simple is 0.
std::optional<double> relative_change(double f1_simple, double f1_engineered);

struct PromptComparison {
  std::string backend_id;
  Task task = Task::Detect;
  double f1_simple = 0.0;
  double f1_engineered = 0.0;
  std::optional<double> change_pct;
};

/// Detection F1 and classification weighted F1 per backend under each
/// protocol. Each result must hold one template. Throws ConfigError when
/// the image sets differ.
std::vector<PromptComparison> compare_prompts(const RunResult& simple, const RunResult& engineered);

/// "+17.6%", "-3.0%" or "NA".
std::string format_change(const std::optional<double>& pct);

}  // namespace polypeval
