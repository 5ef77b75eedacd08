#include <doctest.h>

#include <algorithm>
#include <stdexcept>

#include "polypeval/metrics.hpp"
#include "polypeval/rng.hpp"

using namespace polypeval;
using doctest::Approx;

namespace {

using P = PathologyClass;

/// Pairwise ordering probability, ties counted half.
double brute_auroc(const std::vector<double>& scores, const std::vector<bool>& truths) {
  std::uint64_t twice = 0, pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!truths[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (truths[j]) continue;
      ++pairs;
      if (scores[i] > scores[j]) twice += 2;
      else if (scores[i] == scores[j]) twice += 1;
    }
  }
  return static_cast<double>(twice) / static_cast<double>(2 * pairs);
}

double auroc(const std::vector<double>& s, const std::vector<bool>& t) {
  auto tb = std::make_unique<bool[]>(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) tb[i] = t[i];
  return auroc_from_scores(s, std::span<const bool>(tb.get(), t.size()));
}

// GPT-4 classification counts per class: tp, fp, fn (tn follows from n = 362).
struct ClassCounts {
  P cls;
  std::uint64_t tp, fp, tn, fn;
};
const std::vector<ClassCounts> kGpt4 = {
    {P::AC, 3, 3, 345, 11}, {P::TA, 59, 23, 218, 62}, {P::TVA, 0, 5, 346, 11},
    {P::VA, 0, 0, 356, 6},  {P::HP, 0, 2, 338, 22},   {P::IP, 0, 9, 346, 7},
};

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("f1 examples") {
    CHECK(std::abs(f1({140, 57, 139, 74}) - 0.681) < 0.0005);
    CHECK(std::abs(f1({181, 52, 144, 33}) - 0.810) < 0.0005);
    CHECK(f1({0, 0, 10, 0}) == 0.0);
    CHECK(f1({1, 0, 0, 0}) == 1.0);
  }

  TEST_CASE("f1 stays within [0,1]") {
    PortableRng rng(3);
    for (int i = 0; i < 1000; ++i) {
      ConfusionCounts c{rng.below(50), rng.below(50), rng.below(50), rng.below(50)};
      const double v = f1(c);
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }

  TEST_CASE("one_vs_all hand counts") {
    const std::vector<TaskLabel> preds = {TaskLabel::TA, TaskLabel::TA, TaskLabel::HP};
    const std::vector<P> truths = {P::TA, P::HP, P::HP};
    const auto r = one_vs_all(preds, truths);
    CHECK(r.per_class.at(P::TA).counts == ConfusionCounts{1, 1, 1, 0});
    CHECK(r.per_class.at(P::HP).counts == ConfusionCounts{1, 0, 1, 1});
    CHECK(r.supports.at(P::HP) == 2);
    CHECK(r.matrix_total() == 3);
  }

  TEST_CASE("unanswered predictions are false negatives only") {
    const std::vector<TaskLabel> preds = {TaskLabel::NoAnswer};
    const std::vector<P> truths = {P::TA};
    const auto r = one_vs_all(preds, truths);
    CHECK(r.per_class.at(P::TA).counts == ConfusionCounts{0, 0, 0, 1});
    for (auto c : kPolypClasses) CHECK(r.per_class.at(c).counts.fp == 0);
    const std::vector<TaskLabel> two = {TaskLabel::TwoOptions};
    CHECK(one_vs_all(two, truths).per_class.at(P::TA).counts == ConfusionCounts{0, 0, 0, 1});
  }

  TEST_CASE("length mismatch is rejected") {
    const std::vector<TaskLabel> preds = {TaskLabel::TA};
    const std::vector<P> truths = {};
    CHECK_THROWS_AS(one_vs_all(preds, truths), std::invalid_argument);
  }

  TEST_CASE("replaying GPT-4 classification counts") {
    // Correct predictions for each class, misses as No-A, and every false
    // positive drawn from a normal image. Normal images fill the rest.
    std::vector<TaskLabel> preds;
    std::vector<P> truths;
    std::uint64_t fp_total = 0, support_total = 0;
    for (const auto& c : kGpt4) {
      for (std::uint64_t i = 0; i < c.tp; ++i) preds.push_back(label_for_class(c.cls)), truths.push_back(c.cls);
      for (std::uint64_t i = 0; i < c.fn; ++i) preds.push_back(TaskLabel::NoAnswer), truths.push_back(c.cls);
      for (std::uint64_t i = 0; i < c.fp; ++i) preds.push_back(label_for_class(c.cls)), truths.push_back(P::Normal);
      fp_total += c.fp;
      support_total += c.tp + c.fn;
    }
    const std::uint64_t n = kGpt4[0].tp + kGpt4[0].fp + kGpt4[0].tn + kGpt4[0].fn;
    while (truths.size() < n) preds.push_back(TaskLabel::Normal), truths.push_back(P::Normal);
    REQUIRE(truths.size() == 362);

    const auto r = one_vs_all(preds, truths);
    for (const auto& c : kGpt4) {
      CAPTURE(class_code(c.cls));
      CHECK(r.per_class.at(c.cls).counts == ConfusionCounts{c.tp, c.fp, c.tn, c.fn});
    }
    CHECK(std::abs(r.per_class.at(P::TA).f1 - 0.581) < 0.0005);
    CHECK(std::abs(r.per_class.at(P::AC).f1 - 0.3) < 0.0005);
    CHECK(std::abs(r.weighted_f1 - 0.411) < 0.001);
    CHECK(r.matrix_total() == 362);
  }

  TEST_CASE("permutation invariance") {
    PortableRng rng(11);
    std::vector<TaskLabel> preds;
    std::vector<P> truths;
    for (int i = 0; i < 60; ++i) {
      preds.push_back(static_cast<TaskLabel>(2 + rng.below(8)));
      truths.push_back(kAllClasses[rng.below(7)]);
    }
    const auto before = one_vs_all(preds, truths);
    std::vector<std::size_t> perm(preds.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    rng.shuffle(std::span<std::size_t>(perm));
    std::vector<TaskLabel> p2;
    std::vector<P> t2;
    for (auto i : perm) p2.push_back(preds[i]), t2.push_back(truths[i]);
    const auto after = one_vs_all(p2, t2);
    CHECK(after.weighted_f1 == before.weighted_f1);
    CHECK(after.full_matrix == before.full_matrix);
    for (auto c : kPolypClasses) CHECK(after.per_class.at(c).counts == before.per_class.at(c).counts);
  }

  TEST_CASE("weighted F1 examples") {
    const std::map<P, std::uint64_t> supports = {{P::AC, 17}, {P::TA, 144}, {P::TVA, 12}, {P::VA, 7}, {P::HP, 25}, {P::IP, 9}};
    const std::map<P, double> svm = {{P::AC, .455}, {P::TA, .675}, {P::TVA, .25}, {P::VA, 0}, {P::HP, .313}, {P::IP, .364}};
    CHECK(std::abs(weighted_f1(svm, supports) - 0.556) < 0.0005);
    const std::map<P, double> resnet = {{P::AC, .667}, {P::TA, .848}, {P::TVA, .546}, {P::VA, .25}, {P::HP, .49}, {P::IP, .714}};
    CHECK(std::abs(weighted_f1(resnet, supports) - 0.7494) < 0.001);
    CHECK(weighted_f1({{P::TA, 0.5}}, {{P::TA, 10}}) == 0.5);
    CHECK_THROWS_AS(weighted_f1({{P::TA, 0.5}}, {{P::TA, 0}}), std::invalid_argument);
    CHECK_THROWS_AS(weighted_f1({{P::TA, 0.5}}, {{P::HP, 3}}), std::invalid_argument);
  }

  TEST_CASE("AUROC examples") {
    CHECK(auroc({0.9, 0.8, 0.3, 0.1}, {true, true, false, false}) == 1.0);
    CHECK(auroc({0.5, 0.5, 0.5, 0.5}, {true, false, true, false}) == 0.5);
    CHECK(auroc({0.9, 0.4, 0.6, 0.1}, {true, false, true, false}) == 1.0);
    CHECK(auroc({0.1, 0.9}, {true, false}) == 0.0);
    CHECK_THROWS_AS(auroc({0.1, 0.9}, {true, true}), std::invalid_argument);
    CHECK_THROWS_AS(auroc({0.1}, {true, false}), std::invalid_argument);
  }

  TEST_CASE("AUROC equals pairwise ordering probability on every truth vector up to length 12") {
    PortableRng rng(2024);
    std::size_t checked = 0;
    for (std::size_t len = 2; len <= 12; ++len) {
      for (std::uint32_t mask = 1; mask + 1 < (1u << len); ++mask) {
        std::vector<bool> truths(len);
        for (std::size_t i = 0; i < len; ++i) truths[i] = (mask >> i) & 1u;
        std::vector<double> coarse(len), fine(len), flat(len, 0.25);
        for (std::size_t i = 0; i < len; ++i) {
          coarse[i] = static_cast<double>(rng.below(4)) / 4.0;
          fine[i] = static_cast<double>(rng.below(1000000)) / 1e6;
        }
        for (const auto* s : {&coarse, &fine, &flat}) {
          if (auroc(*s, truths) != brute_auroc(*s, truths)) {
            FAIL("mismatch at length ", len, " mask ", mask);
          }
          ++checked;
        }
      }
    }
    // 2^L - 2 mixed truth vectors for each length L in 2..12
    CHECK(checked == 3 * (8188 - 2 * 11));
  }

  TEST_CASE("ROC points run from origin to (1,1)") {
    const double scores[] = {0.9, 0.4, 0.6, 0.1};
    const bool truths[] = {true, false, true, false};
    const auto pts = roc_points(scores, truths);
    REQUIRE(pts.size() == 5);
    CHECK(pts.front() == std::pair<double, double>{0.0, 0.0});
    CHECK(pts[2] == std::pair<double, double>{0.0, 1.0});
    CHECK(pts.back() == std::pair<double, double>{1.0, 1.0});
  }

  TEST_CASE("point AUROC") {
    CHECK(point_auroc({10, 0, 10, 0}) == 1.0);
    CHECK(point_auroc({5, 5, 5, 5}) == 0.5);
    const double gpt4 = (129.0 / 179.0 + 162.0 / 172.0) / 2.0;
    CHECK(point_auroc({129, 10, 162, 50}) == Approx(gpt4));
    CHECK(std::abs(gpt4 - 0.831) < 0.0005);
    CHECK(std::abs(point_auroc({175, 172, 7, 5}) - 0.506) < 0.0005);
    CHECK_THROWS_AS(point_auroc({0, 3, 3, 0}), std::domain_error);
  }

  TEST_CASE("detection report") {
    const std::vector<TaskLabel> preds = {TaskLabel::Polyp, TaskLabel::Normal, TaskLabel::NoAnswer, TaskLabel::Polyp,
                                          TaskLabel::Normal};
    const bool presence[] = {true, true, true, false, false};
    const auto r = detection_report(preds, presence);
    CHECK(r.counts == ConfusionCounts{1, 1, 1, 2});
    CHECK(r.matrix[0][0] == 1);
    CHECK(r.matrix[0][1] == 1);
    CHECK(r.matrix[1][0] == 1);
    CHECK(r.matrix[1][1] == 1);
    CHECK(r.matrix[2][0] == 1);
    CHECK(r.matrix_total() == 5);
    CHECK(r.f1 == Approx(0.4));
  }
}
