#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "polypeval/labels.hpp"

namespace polypeval {

struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fn = 0;

  std::uint64_t total() const { return tp + fp + tn + fn; }
  std::uint64_t support() const { return tp + fn; }
  bool operator==(const ConfusionCounts&) const = default;
};

/// 2tp / (2tp + fp + fn); 0 when the denominator is 0.
double f1(const ConfusionCounts& c);
double precision(const ConfusionCounts& c);
double recall(const ConfusionCounts& c);
double specificity(const ConfusionCounts& c);
double accuracy(const ConfusionCounts& c);

/// (sensitivity + specificity) / 2 at a single operating point. Throws
/// std::domain_error when either class is absent.
double point_auroc(const ConfusionCounts& c);

/// Area under the ROC curve with tied scores contributing half, i.e. the
/// probability that a random positive outranks a random negative. Throws
/// std::invalid_argument on a one-class truth vector or length mismatch.
double auroc_from_scores(std::span<const double> scores, std::span<const bool> truths);

/// ROC operating points (fpr, tpr) from the highest threshold down,
/// starting at (0,0) and ending at (1,1).
std::vector<std::pair<double, double>> roc_points(std::span<const double> scores, std::span<const bool> truths);

/// Support-weighted mean of per-class F1. Throws std::invalid_argument on
/// zero total support or an F1 entry without a support entry.
double weighted_f1(const std::map<PathologyClass, double>& per_class_f1,
                   const std::map<PathologyClass, std::uint64_t>& supports);

inline constexpr std::size_t kLabelCount = 10;
inline constexpr std::size_t kClassCount = 7;

struct ClassScore {
  ConfusionCounts counts;
  double f1 = 0.0;
};

struct MulticlassReport {
  std::map<PathologyClass, ClassScore> per_class;  // the six polyp classes
  std::map<PathologyClass, std::uint64_t> supports;
  double weighted_f1 = 0.0;
  /// full_matrix[predicted label][true class]
  std::array<std::array<std::uint64_t, kClassCount>, kLabelCount> full_matrix{};

  std::uint64_t matrix_total() const;
  nlohmann::json to_json() const;
};

/// One-vs-all reduction over the six polyp classes. No-A and 2OP predictions
/// count as false negatives for the true class and never as tp or fp.
MulticlassReport one_vs_all(std::span<const TaskLabel> preds, std::span<const PathologyClass> truths);

struct DetectionReport {
  ConfusionCounts counts;  // positive class: polyp present
  double f1 = 0.0;
  /// matrix[predicted: Polyp, Normal, No-A][truth: Polyp, Normal]
  std::array<std::array<std::uint64_t, 2>, 3> matrix{};

  std::uint64_t matrix_total() const;
  nlohmann::json to_json() const;
};

DetectionReport detection_report(std::span<const TaskLabel> preds, std::span<const bool> presence);

}  // namespace polypeval
