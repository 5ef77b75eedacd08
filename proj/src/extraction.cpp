#include "polypeval/extraction.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "polypeval/csv.hpp"
#include "polypeval/errors.hpp"
#include "polypeval/prompts.hpp"

namespace polypeval {

namespace {

// Lowercase; markup and separators become spaces; clause punctuation is kept
// so negation scope can stop at it.
std::string normalize(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool space = true;
  for (unsigned char ch : text) {
    char c = static_cast<char>(std::tolower(ch));
    if (std::isalnum(ch) || c == '\'' || c == '.' || c == ',' || c == ';' || c == ':' || c == '!' || c == '?' ||
        ch >= 0x80) {
      out += c;
      space = false;
    } else if (!space) {
      out += ' ';
      space = true;
    }
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '\'' || static_cast<unsigned char>(c) >= 0x80; }

bool is_clause_break(char c) { return c == '.' || c == ',' || c == ';' || c == ':' || c == '!' || c == '?'; }

const std::set<std::string>& negators() {
  static const std::set<std::string> words = {"no",     "not",     "without", "absent",  "absence", "negative", "free",
                                              "rule",   "ruled",   "exclude", "excluded", "nor",    "neither",  "never",
                                              "isn't",  "doesn't", "don't",   "lacks",    "lack"};
  return words;
}

/// True when one of the up-to-four words before `pos` in the same clause is a
/// negator.
bool negated(const std::string& text, std::size_t pos) {
  int words = 0;
  std::size_t i = pos;
  while (i > 0 && words < 4) {
    std::size_t end = i;
    while (end > 0 && text[end - 1] == ' ') --end;
    if (end == 0 || is_clause_break(text[end - 1])) return false;
    std::size_t start = end;
    while (start > 0 && is_word_char(text[start - 1])) --start;
    if (start == end) return false;
    if (negators().count(text.substr(start, end - start))) return true;
    ++words;
    i = start;
  }
  return false;
}

struct Match {
  std::size_t pos;
  std::size_t len;
  const Synonym* syn;
};

Synonym::Kind parse_kind(const std::string& s, PathologyClass& cls) {
  if (s == "Normal") return Synonym::Kind::Normal;
  if (s == "Polyp") return Synonym::Kind::Polyp;
  if (s == "Hedge") return Synonym::Kind::Hedge;
  if (s == "Ignore") return Synonym::Kind::Ignore;
  auto c = parse_class_code(s);
  if (!c || *c == PathologyClass::Normal) {
    throw ConfigError("synonym class '" + s + "' is not one of AC, TA, TVA, VA, HP, IP, Normal, Polyp, Hedge, Ignore");
  }
  cls = *c;
  return Synonym::Kind::Class;
}

std::string read_all(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::optional<PathologyClass> option_number_class(int n) {
  static constexpr std::array<PathologyClass, 7> order = {PathologyClass::Normal, PathologyClass::AC, PathologyClass::TA,
                                                          PathologyClass::TVA,    PathologyClass::VA, PathologyClass::HP,
                                                          PathologyClass::IP};
  if (n < 1 || n > 7) return std::nullopt;
  return order[static_cast<std::size_t>(n - 1)];
}

}  // namespace

std::string_view category_name(Category c) {
  switch (c) {
    case Category::NeedsHumanUnsure: return "NeedsHuman_Unsure";
    case Category::NeedsHumanMultipleOrNone: return "NeedsHuman_MultipleOrNone";
    case Category::NoPolyp: return "NoPolyp";
    case Category::PolypDetected: return "PolypDetected";
    case Category::PolypType: return "PolypType";
  }
  return "?";
}

std::optional<Category> parse_category(std::string_view s) {
  for (auto c : {Category::NeedsHumanUnsure, Category::NeedsHumanMultipleOrNone, Category::NoPolyp, Category::PolypDetected,
                 Category::PolypType}) {
    if (category_name(c) == s) return c;
  }
  return std::nullopt;
}

ExtractionOutcome ExtractionOutcome::make(Category c, ExtractionMethod m, std::string evidence, std::optional<PathologyClass> p) {
  ExtractionOutcome o;
  o.category = c;
  o.method = m;
  o.evidence = std::move(evidence);
  if (c == Category::PolypType) o.pathology = p;
  return o;
}

Extractor::Extractor(std::vector<Synonym> table, std::string llm_prompt)
    : table_(std::move(table)), llm_prompt_(std::move(llm_prompt)) {
  for (auto& s : table_) s.surface = normalize(s.surface);
  table_.erase(std::remove_if(table_.begin(), table_.end(), [](const Synonym& s) { return s.surface.empty(); }), table_.end());
}

Extractor Extractor::load(const std::filesystem::path& synonyms_csv, const std::filesystem::path& llm_prompt) {
  const auto table = csv::read_file(synonyms_csv);
  const auto surface_col = table.column("surface_form");
  const auto class_col = table.column("class");
  std::vector<Synonym> syns;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    if (row.size() <= std::max(surface_col, class_col)) {
      throw ConfigError(synonyms_csv.string() + " row " + std::to_string(table.line_numbers[i]) + ": too few fields");
    }
    Synonym s;
    s.surface = row[surface_col];
    s.kind = parse_kind(row[class_col], s.pathology);
    syns.push_back(std::move(s));
  }
  return Extractor(std::move(syns), llm_prompt.empty() ? std::string{} : read_all(llm_prompt));
}

Extractor Extractor::load_default() {
  const auto dir = default_asset_dir();
  return load(dir / "synonyms.csv", dir / "extraction_prompt.txt");
}

ExtractionOutcome Extractor::extract_rules(std::string_view raw_text, Task task) const {
  constexpr auto kRules = ExtractionMethod::Rules;
  const std::string text = normalize(raw_text);
  if (text.empty()) return ExtractionOutcome::make(Category::NeedsHumanUnsure, kRules);

  // Every word-bounded occurrence of every surface form; longest wins on overlap.
  std::vector<Match> candidates;
  for (const auto& syn : table_) {
    for (auto pos = text.find(syn.surface); pos != std::string::npos; pos = text.find(syn.surface, pos + 1)) {
      const std::size_t end = pos + syn.surface.size();
      if (pos > 0 && is_word_char(text[pos - 1])) continue;
      if (end < text.size() && is_word_char(text[end])) continue;
      candidates.push_back({pos, syn.surface.size(), &syn});
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const Match& a, const Match& b) {
    return a.len != b.len ? a.len > b.len : a.pos < b.pos;
  });
  std::vector<Match> accepted;
  for (const auto& m : candidates) {
    const bool overlaps = std::any_of(accepted.begin(), accepted.end(), [&](const Match& a) {
      return m.pos < a.pos + a.len && a.pos < m.pos + m.len;
    });
    if (!overlaps) accepted.push_back(m);
  }
  std::sort(accepted.begin(), accepted.end(), [](const Match& a, const Match& b) { return a.pos < b.pos; });

  std::set<PathologyClass> classes;
  std::string class_evidence, normal_evidence, polyp_evidence, hedge_evidence;
  bool explicit_normal = false;  // a "no polyp" style statement, or option 1
  bool weak_normal = false;      // "normal", "unremarkable", ...
  bool polyp = false;
  bool hedge = false;
  auto note = [](std::string& ev, std::string_view s) {
    if (!ev.empty()) ev += "; ";
    ev += s;
  };

  if (task == Task::Classify) {
    static const std::regex option_re(R"(^\s*(?:option\s*|answer\s*:?\s*)?([1-7])(?:\s*[.):]|\s*$))");
    std::smatch m;
    std::string stripped;
    for (char c : std::string(raw_text)) {
      if (c != '*' && c != '#' && c != '`') stripped += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    if (std::regex_search(stripped, m, option_re)) {
      const auto cls = option_number_class(std::stoi(m[1].str()));
      if (*cls == PathologyClass::Normal) {
        explicit_normal = true;
        note(normal_evidence, "option " + m[1].str());
      } else {
        classes.insert(*cls);
        note(class_evidence, "option " + m[1].str());
      }
    }
  }

  for (const auto& m : accepted) {
    const std::string_view surface(text.data() + m.pos, m.len);
    switch (m.syn->kind) {
      case Synonym::Kind::Class:
        if (!negated(text, m.pos)) {
          classes.insert(m.syn->pathology);
          note(class_evidence, surface);
        }
        break;
      case Synonym::Kind::Normal:
        if (!negated(text, m.pos)) {
          (surface.rfind("no ", 0) == 0 ? explicit_normal : weak_normal) = true;
          note(normal_evidence, surface);
        }
        break;
      case Synonym::Kind::Polyp:
        if (negated(text, m.pos)) {
          explicit_normal = true;
          note(normal_evidence, surface);
        } else {
          polyp = true;
          note(polyp_evidence, surface);
        }
        break;
      case Synonym::Kind::Hedge:
        hedge = true;
        note(hedge_evidence, surface);
        break;
      case Synonym::Kind::Ignore:
        break;
    }
  }

  if (classes.size() >= 2) return ExtractionOutcome::make(Category::NeedsHumanMultipleOrNone, kRules, class_evidence);
  if (classes.size() == 1) {
    if (hedge) return ExtractionOutcome::make(Category::NeedsHumanUnsure, kRules, hedge_evidence);
    if (explicit_normal) {
      return ExtractionOutcome::make(Category::NeedsHumanMultipleOrNone, kRules, class_evidence + "; " + normal_evidence);
    }
    return ExtractionOutcome::make(Category::PolypType, kRules, class_evidence, *classes.begin());
  }
  if (hedge) return ExtractionOutcome::make(Category::NeedsHumanUnsure, kRules, hedge_evidence);
  if (polyp) {
    if (task == Task::Detect) return ExtractionOutcome::make(Category::PolypDetected, kRules, polyp_evidence);
    return ExtractionOutcome::make(Category::NeedsHumanMultipleOrNone, kRules, polyp_evidence);
  }
  if (explicit_normal || weak_normal) return ExtractionOutcome::make(Category::NoPolyp, kRules, normal_evidence);
  return ExtractionOutcome::make(task == Task::Classify ? Category::NeedsHumanMultipleOrNone : Category::NeedsHumanUnsure, kRules);
}

std::string Extractor::render_llm_prompt(std::string_view raw_text, Task task) const {
  if (llm_prompt_.empty()) throw ConfigError("no extraction prompt configured");
  std::string out = llm_prompt_;
  auto replace = [&out](const std::string& marker, std::string_view value) {
    const auto pos = out.find(marker);
    if (pos != std::string::npos) out.replace(pos, marker.size(), value);
  };
  replace("{{task}}", task == Task::Detect ? "polyp detection" : "polyp classification");
  replace("{{response}}", raw_text);
  return out;
}

ExtractionOutcome Extractor::parse_llm_reply(std::string_view reply) {
  constexpr auto kLlm = ExtractionMethod::Llm;
  const auto unsure = ExtractionOutcome::make(Category::NeedsHumanUnsure, kLlm, std::string(reply.substr(0, 200)));
  const auto open = reply.find('{');
  const auto close = reply.rfind('}');
  if (open == std::string_view::npos || close == std::string_view::npos || close < open) return unsure;

  nlohmann::json j = nlohmann::json::parse(reply.substr(open, close - open + 1), nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("category")) return unsure;

  auto to_number = [](const nlohmann::json& v) -> std::optional<int> {
    if (v.is_number_integer()) return v.get<int>();
    if (v.is_string()) {
      const auto s = v.get<std::string>();
      static const std::regex lead(R"(^\s*\(?([1-5])\b)");
      std::smatch m;
      if (std::regex_search(s, m, lead)) return std::stoi(m[1].str());
      if (s.find("I am unsure") != std::string::npos) return 1;
      if (s.find("More than one diagnosis") != std::string::npos) return 2;
      if (s.find("No polyp is detected") != std::string::npos) return 3;
      if (s.find("A polyp is detected") != std::string::npos) return 4;
      if (s.find("polyp type is classified") != std::string::npos) return 5;
    }
    return std::nullopt;
  };

  std::set<int> categories;
  const auto& cat = j["category"];
  if (cat.is_array()) {
    for (const auto& v : cat) {
      auto n = to_number(v);
      if (!n) return unsure;
      categories.insert(*n);
    }
  } else if (auto n = to_number(cat)) {
    categories.insert(*n);
  }
  if (categories.empty()) return unsure;
  if (categories.size() > 1) return ExtractionOutcome::make(Category::NeedsHumanMultipleOrNone, kLlm, cat.dump());

  switch (*categories.begin()) {
    case 1: return ExtractionOutcome::make(Category::NeedsHumanUnsure, kLlm, cat.dump());
    case 2: return ExtractionOutcome::make(Category::NeedsHumanMultipleOrNone, kLlm, cat.dump());
    case 3: return ExtractionOutcome::make(Category::NoPolyp, kLlm, cat.dump());
    case 4: return ExtractionOutcome::make(Category::PolypDetected, kLlm, cat.dump());
    case 5: {
      if (!j.contains("polyp_type") || !j["polyp_type"].is_string()) return unsure;
      const auto type = j["polyp_type"].get<std::string>();
      std::optional<PathologyClass> cls = parse_class_code(type);
      if (!cls) {
        const std::string norm = normalize(type);
        for (auto c : kPolypClasses) {
          if (normalize(class_name(c)) == norm) cls = c;
        }
      }
      if (!cls || *cls == PathologyClass::Normal) return unsure;
      return ExtractionOutcome::make(Category::PolypType, kLlm, type, cls);
    }
    default: return unsure;
  }
}

ExtractionOutcome Extractor::extract_llm(ChatClient& client, std::string_view raw_text, Task task) const {
  Conversation conv;
  conv.turns.push_back({Role::User, render_llm_prompt(raw_text, task), nullptr});
  const auto resp = client.complete(conv, GenerationParams::extraction(), "extraction");
  return parse_llm_reply(resp.raw_text);
}

ExtractionOutcome Extractor::extract(std::string_view raw_text, Task task, ChatClient* llm) const {
  auto outcome = extract_rules(raw_text, task);
  if (outcome.category == Category::NeedsHumanUnsure && llm) return extract_llm(*llm, raw_text, task);
  return outcome;
}

TaskLabel to_task_label(const ExtractionOutcome& o, Task task) {
  switch (o.category) {
    case Category::NeedsHumanUnsure: return TaskLabel::NoAnswer;
    case Category::NeedsHumanMultipleOrNone: return task == Task::Classify ? TaskLabel::TwoOptions : TaskLabel::NoAnswer;
    case Category::NoPolyp: return TaskLabel::Normal;
    case Category::PolypDetected: return task == Task::Detect ? TaskLabel::Polyp : TaskLabel::NoAnswer;
    case Category::PolypType:
      if (task == Task::Detect) return TaskLabel::Polyp;
      return o.pathology ? label_for_class(*o.pathology) : TaskLabel::NoAnswer;
  }
  return TaskLabel::NoAnswer;
}

std::vector<std::size_t> sample_indices(std::size_t population, std::size_t n, std::uint64_t seed) {
  if (n > population) {
    throw std::invalid_argument("audit sample of " + std::to_string(n) + " exceeds " + std::to_string(population) + " results");
  }
  std::vector<std::size_t> idx(population);
  for (std::size_t i = 0; i < population; ++i) idx[i] = i;
  PortableRng rng(seed);
  // Partial Fisher-Yates: the first n slots are a uniform sample.
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(population - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  return idx;
}

void write_audit_csv(const std::vector<AuditItem>& items, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write audit file " + path.string());
  csv::write_row(out, {"id", "raw_text", "category", "pathology"});
  for (const auto& it : items) {
    csv::write_row(out, {it.id, it.raw_text, std::string(category_name(it.outcome.category)),
                         it.outcome.pathology ? std::string(class_code(*it.outcome.pathology)) : std::string()});
  }
}

}  // namespace polypeval
