#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "polypeval/image.hpp"
#include "polypeval/metrics.hpp"
#include "polypeval/runner.hpp"

namespace polypeval {

// ---- fixture verification ----

struct CountRow {
  std::string model;
  std::string key;  // "detection", a class code, or "weighted"
  ConfusionCounts counts;  // unused for weighted rows
  double reported = 0.0;
  std::optional<double> expected_delta;  // documented discrepancy
  std::size_t line = 0;
};

/// CSV `model,task_or_class,tp,fp,tn,fn,reported_f1[,expected_delta]`.
/// Throws ConfigError on a malformed fixture.
std::vector<CountRow> load_count_fixture(const std::filesystem::path& path);

struct FixtureCheck {
  std::string model;
  std::string key;
  double computed = 0.0;
  double reported = 0.0;
  double delta = 0.0;  // computed - reported
  std::optional<double> expected_delta;
  std::size_t line = 0;
  bool pass = false;
  bool not_applicable = false;  // NA on both sides
};

struct FixtureReport {
  std::vector<FixtureCheck> checks;
  bool all_pass() const;
};

/// F1 per count row; weighted F1 per model from that model's class rows with
/// supports tp + fn. A row passes when |delta| <= tol, or when it documents
/// an expected_delta and |delta - expected_delta| <= tol.
FixtureReport verify_counts(const std::vector<CountRow>& rows, double tol_f1 = 0.005, double tol_weighted = 0.005);

struct PromptChangeRow {
  std::string backend;
  Task task = Task::Detect;
  double f1_simple = 0.0;
  double f1_engineered = 0.0;
  std::optional<double> reported_pct;  // nullopt = NA
  std::optional<double> expected_delta;
  std::size_t line = 0;
};

std::vector<PromptChangeRow> load_prompt_change_fixture(const std::filesystem::path& path);

/// Percent-point deltas; an NA row passes iff the computed change is NA.
FixtureReport verify_prompt_changes(const std::vector<PromptChangeRow>& rows, double tol_pct = 0.1);

// ---- report bundle ----

struct ModelSummary {
  std::string backend_id;
  std::string template_id;
  std::size_t rows = 0;
  std::size_t failed = 0;
  std::optional<DetectionReport> detection;
  std::optional<double> detection_auroc;        // from ordinal answer scores
  std::optional<double> detection_point_auroc;  // (sens + spec) / 2
  std::vector<std::pair<double, double>> detection_roc;
  std::optional<MulticlassReport> classification;
  std::map<PathologyClass, std::optional<double>> class_auroc;
  std::map<PathologyClass, std::vector<std::pair<double, double>>> class_roc;
};

struct ReportBundle {
  std::vector<ModelSummary> summaries;  // sorted by (backend, template)
  std::vector<PromptComparison> comparisons;
  nlohmann::json tilense_index = nlohmann::json::array();
};

/// Pure function of the rows (and the sidecars found in tilense_dir).
ReportBundle build_report(const RunResult& result, const std::filesystem::path& tilense_dir = {});

/// Writes metrics.csv/json, confusion matrices (CSV + PNG), ROC point lists,
/// prompt_comparison.csv and tilense_index.json under `dir`. Returns the
/// files written.
std::vector<std::filesystem::path> write_report(const ReportBundle& bundle, const std::filesystem::path& dir);

/// Heat-shaded matrix with cell counts drawn in a small bitmap font.
Image render_matrix(const std::vector<std::vector<std::uint64_t>>& cells);

}  // namespace polypeval
