#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "polypeval/chat_client.hpp"
#include "polypeval/labels.hpp"
#include "polypeval/rng.hpp"

namespace polypeval {

/// The five structured categories a free-text answer is reduced to.
enum class Category { NeedsHumanUnsure, NeedsHumanMultipleOrNone, NoPolyp, PolypDetected, PolypType };

std::string_view category_name(Category c);
std::optional<Category> parse_category(std::string_view s);

enum class ExtractionMethod { Rules, Llm };

struct ExtractionOutcome {
  Category category = Category::NeedsHumanUnsure;
  std::optional<PathologyClass> pathology;  // set iff category == PolypType
  ExtractionMethod method = ExtractionMethod::Rules;
  std::string evidence;

  static ExtractionOutcome make(Category c, ExtractionMethod m, std::string evidence = {},
                                std::optional<PathologyClass> p = std::nullopt);
};

/// Surface-form table entry. `kind` is a class code or one of the marker
/// kinds Normal / Polyp / Hedge / Ignore.
struct Synonym {
  enum class Kind { Class, Normal, Polyp, Hedge, Ignore };
  std::string surface;
  Kind kind = Kind::Ignore;
  PathologyClass pathology = PathologyClass::Normal;
};

class Extractor {
 public:
  explicit Extractor(std::vector<Synonym> table, std::string llm_prompt = {});

  /// Loads a `surface_form,class` CSV (and optionally the LLM prompt text).
  static Extractor load(const std::filesystem::path& synonyms_csv, const std::filesystem::path& llm_prompt = {});
  static Extractor load_default();

  /// Total: every string maps to a category.
  ExtractionOutcome extract_rules(std::string_view raw_text, Task task) const;

  /// Asks an extraction backend (temperature 0) for a structured label.
  /// Unparseable replies become NeedsHumanUnsure; backend errors propagate.
  ExtractionOutcome extract_llm(ChatClient& client, std::string_view raw_text, Task task) const;

  /// Rules first; the LLM is consulted only when the rules are unsure.
  ExtractionOutcome extract(std::string_view raw_text, Task task, ChatClient* llm = nullptr) const;

  /// Structured reply parsing, exposed for testing.
  static ExtractionOutcome parse_llm_reply(std::string_view reply);

  std::string render_llm_prompt(std::string_view raw_text, Task task) const;

 private:
  std::vector<Synonym> table_;
  std::string llm_prompt_;
};

/// Task label for scoring. Unsure maps to No-A; multiple-or-none maps to 2OP
/// for classification and No-A for detection.
TaskLabel to_task_label(const ExtractionOutcome& o, Task task);

/// Seeded uniform sample without replacement, returned in original order.
template <typename T>
std::vector<T> sample_for_audit(const std::vector<T>& items, std::size_t n, std::uint64_t seed);

struct AuditItem {
  std::string id;
  std::string raw_text;
  ExtractionOutcome outcome;
};

/// CSV `id,raw_text,category,pathology`.
void write_audit_csv(const std::vector<AuditItem>& items, const std::filesystem::path& path);

std::vector<std::size_t> sample_indices(std::size_t population, std::size_t n, std::uint64_t seed);

template <typename T>
std::vector<T> sample_for_audit(const std::vector<T>& items, std::size_t n, std::uint64_t seed) {
  std::vector<T> out;
  for (auto i : sample_indices(items.size(), n, seed)) out.push_back(items[i]);
  return out;
}

}  // namespace polypeval
