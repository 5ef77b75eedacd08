#include "polypeval/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace polypeval {

namespace {

double ratio(std::uint64_t num, std::uint64_t den) { return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den); }

std::vector<std::size_t> order_by_score_desc(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

void check_binary_inputs(std::span<const double> scores, std::span<const bool> truths) {
  if (scores.size() != truths.size()) throw std::invalid_argument("scores and truths differ in length");
  const auto positives = std::count(truths.begin(), truths.end(), true);
  if (positives == 0 || positives == static_cast<std::ptrdiff_t>(truths.size())) {
    throw std::invalid_argument("AUROC needs both positive and negative truths");
  }
}

}  // namespace

double f1(const ConfusionCounts& c) { return ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn); }
double precision(const ConfusionCounts& c) { return ratio(c.tp, c.tp + c.fp); }
double recall(const ConfusionCounts& c) { return ratio(c.tp, c.tp + c.fn); }
double specificity(const ConfusionCounts& c) { return ratio(c.tn, c.tn + c.fp); }
double accuracy(const ConfusionCounts& c) { return ratio(c.tp + c.tn, c.total()); }

double point_auroc(const ConfusionCounts& c) {
  if (c.tp + c.fn == 0 || c.tn + c.fp == 0) throw std::domain_error("point AUROC undefined without both classes");
  return (recall(c) + specificity(c)) / 2.0;
}

double auroc_from_scores(std::span<const double> scores, std::span<const bool> truths) {
  check_binary_inputs(scores, truths);
  const auto order = order_by_score_desc(scores);
  // Trapezoids accumulated in integers: each threshold group adds
  // dneg * (2 * pos_before + dpos); the area is that sum / (2 * P * N).
  std::uint64_t pos_seen = 0, neg_seen = 0, twice_area = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::uint64_t dpos = 0, dneg = 0;
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (truths[order[j]] ? dpos : dneg) += 1;
      ++j;
    }
    twice_area += dneg * (2 * pos_seen + dpos);
    pos_seen += dpos;
    neg_seen += dneg;
    i = j;
  }
  return static_cast<double>(twice_area) / static_cast<double>(2 * pos_seen * neg_seen);
}

std::vector<std::pair<double, double>> roc_points(std::span<const double> scores, std::span<const bool> truths) {
  check_binary_inputs(scores, truths);
  const auto order = order_by_score_desc(scores);
  const auto p = static_cast<std::uint64_t>(std::count(truths.begin(), truths.end(), true));
  const auto n = static_cast<std::uint64_t>(truths.size()) - p;
  std::vector<std::pair<double, double>> pts{{0.0, 0.0}};
  std::uint64_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (truths[order[j]] ? tp : fp) += 1;
      ++j;
    }
    pts.emplace_back(ratio(fp, n), ratio(tp, p));
    i = j;
  }
  return pts;
}

double weighted_f1(const std::map<PathologyClass, double>& per_class_f1, const std::map<PathologyClass, std::uint64_t>& supports) {
  double weighted = 0.0;
  std::uint64_t total = 0;
  for (const auto& [cls, score] : per_class_f1) {
    auto it = supports.find(cls);
    if (it == supports.end()) throw std::invalid_argument(std::string("no support for class ") + std::string(class_code(cls)));
    weighted += static_cast<double>(it->second) * score;
    total += it->second;
  }
  if (total == 0) throw std::invalid_argument("weighted F1 needs a positive total support");
  return weighted / static_cast<double>(total);
}

std::uint64_t MulticlassReport::matrix_total() const {
  std::uint64_t total = 0;
  for (const auto& row : full_matrix) total = std::accumulate(row.begin(), row.end(), total);
  return total;
}

nlohmann::json MulticlassReport::to_json() const {
  nlohmann::json j;
  for (const auto& [cls, s] : per_class) {
    j["per_class"][std::string(class_code(cls))] = {{"tp", s.counts.tp}, {"fp", s.counts.fp}, {"tn", s.counts.tn},
                                                    {"fn", s.counts.fn}, {"f1", s.f1},         {"support", supports.at(cls)}};
  }
  j["weighted_f1"] = weighted_f1;
  nlohmann::json matrix = nlohmann::json::object();
  for (std::size_t p = 0; p < kLabelCount; ++p) {
    nlohmann::json row;
    for (std::size_t t = 0; t < kClassCount; ++t) {
      row[std::string(class_code(static_cast<PathologyClass>(t)))] = full_matrix[p][t];
    }
    matrix[std::string(label_name(static_cast<TaskLabel>(p)))] = row;
  }
  j["full_matrix"] = matrix;
  return j;
}

MulticlassReport one_vs_all(std::span<const TaskLabel> preds, std::span<const PathologyClass> truths) {
  if (preds.size() != truths.size()) throw std::invalid_argument("predictions and truths differ in length");
  MulticlassReport r;
  for (auto cls : kPolypClasses) {
    const TaskLabel target = label_for_class(cls);
    ConfusionCounts c;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      const bool predicted = preds[i] == target;
      const bool actual = truths[i] == cls;
      if (predicted && actual) ++c.tp;
      else if (predicted) ++c.fp;
      else if (actual) ++c.fn;
      else ++c.tn;
    }
    r.per_class[cls] = {c, f1(c)};
    r.supports[cls] = c.support();
  }
  for (std::size_t i = 0; i < preds.size(); ++i) {
    ++r.full_matrix[static_cast<std::size_t>(preds[i])][static_cast<std::size_t>(truths[i])];
  }
  std::map<PathologyClass, double> scores;
  for (const auto& [cls, s] : r.per_class) scores[cls] = s.f1;
  std::uint64_t total_support = 0;
  for (const auto& [cls, n] : r.supports) total_support += n;
  r.weighted_f1 = total_support ? weighted_f1(scores, r.supports) : 0.0;
  return r;
}

std::uint64_t DetectionReport::matrix_total() const {
  std::uint64_t total = 0;
  for (const auto& row : matrix) total += row[0] + row[1];
  return total;
}

nlohmann::json DetectionReport::to_json() const {
  static constexpr std::array<const char*, 3> pred_names{"Polyp", "Normal", "No-A"};
  nlohmann::json m;
  for (std::size_t p = 0; p < 3; ++p) m[pred_names[p]] = {{"Polyp", matrix[p][0]}, {"Normal", matrix[p][1]}};
  return {{"tp", counts.tp}, {"fp", counts.fp}, {"tn", counts.tn}, {"fn", counts.fn}, {"f1", f1}, {"matrix", m}};
}

DetectionReport detection_report(std::span<const TaskLabel> preds, std::span<const bool> presence) {
  if (preds.size() != presence.size()) throw std::invalid_argument("predictions and truths differ in length");
  DetectionReport r;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const bool predicted = preds[i] == TaskLabel::Polyp;
    const bool actual = presence[i];
    if (predicted && actual) ++r.counts.tp;
    else if (predicted) ++r.counts.fp;
    else if (actual) ++r.counts.fn;
    else ++r.counts.tn;
    const std::size_t row = predicted ? 0 : preds[i] == TaskLabel::Normal ? 1 : 2;
    ++r.matrix[row][actual ? 0 : 1];
  }
  r.f1 = f1(r.counts);
  return r;
}

}  // namespace polypeval
