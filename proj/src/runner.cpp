#include "polypeval/runner.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <set>
#include <sstream>
#include <tuple>

#include <spdlog/spdlog.h>

#include "polypeval/cache.hpp"
#include "polypeval/errors.hpp"
#include "polypeval/hash.hpp"
#include "polypeval/ledger.hpp"
#include "polypeval/metrics.hpp"
#include "polypeval/parallel.hpp"
#include "polypeval/prompts.hpp"
#include "polypeval/remote_backend.hpp"

namespace polypeval {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view task_selection_name(TaskSelection t) {
  switch (t) {
    case TaskSelection::Detect: return "detect";
    case TaskSelection::Classify: return "classify";
    case TaskSelection::Both: return "both";
  }
  return "both";
}

std::optional<TaskSelection> parse_task_selection(std::string_view s) {
  if (s == "detect") return TaskSelection::Detect;
  if (s == "classify") return TaskSelection::Classify;
  if (s == "both") return TaskSelection::Both;
  return std::nullopt;
}

namespace {

fs::path resolve(const fs::path& p, const fs::path& base) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string backend_id_of(const json& j) {
  if (!j.is_object() || !j.contains("backend_id") || !j["backend_id"].is_string()) {
    throw ConfigError("backend config needs a string backend_id");
  }
  return j["backend_id"].get<std::string>();
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

json outcome_json(const ExtractionOutcome& o) {
  return {{"category", std::string(category_name(o.category))},
          {"pathology", o.pathology ? json(std::string(class_code(*o.pathology))) : json(nullptr)},
          {"method", o.method == ExtractionMethod::Rules ? "rules" : "llm"},
          {"evidence", o.evidence}};
}

ExtractionOutcome outcome_from_json(const json& j) {
  ExtractionOutcome o;
  const auto cat = parse_category(j.at("category").get<std::string>());
  if (!cat) throw ConfigError("unknown category " + j.at("category").dump());
  o.category = *cat;
  if (!j.at("pathology").is_null()) o.pathology = parse_class_code(j.at("pathology").get<std::string>());
  o.method = j.at("method") == "llm" ? ExtractionMethod::Llm : ExtractionMethod::Rules;
  o.evidence = j.value("evidence", "");
  return o;
}

json answer_json(const std::optional<TaskAnswer>& a) {
  if (!a) return nullptr;
  return {{"digest", a->digest},
          {"raw_text", a->raw_text},
          {"outcome", outcome_json(a->outcome)},
          {"label", std::string(label_name(a->label))}};
}

std::optional<TaskAnswer> answer_from_json(const json& j) {
  if (j.is_null()) return std::nullopt;
  TaskAnswer a;
  a.digest = j.at("digest");
  a.raw_text = j.at("raw_text");
  a.outcome = outcome_from_json(j.at("outcome"));
  const auto label = parse_label(j.at("label").get<std::string>());
  if (!label) throw ConfigError("unknown label " + j.at("label").dump());
  a.label = *label;
  return a;
}

using RowKey = std::tuple<std::string, std::string, std::string>;

RowKey key_of(const ResultRow& r) { return {r.image_id, r.backend_id, r.template_id}; }

/// Reads results.jsonl; a torn final line from an interrupted write is
/// dropped with a warning. Later lines win.
std::map<RowKey, ResultRow> read_results(const fs::path& path) {
  std::map<RowKey, ResultRow> rows;
  std::ifstream in(path);
  if (!in) return rows;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      auto row = ResultRow::from_json(json::parse(line));
      rows[key_of(row)] = std::move(row);
    } catch (const std::exception& e) {
      spdlog::warn("{}:{}: skipping unreadable result line ({})", path.string(), n, e.what());
    }
  }
  return rows;
}

void write_results(const fs::path& path, const std::vector<ResultRow>& rows) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    for (const auto& r : rows) out << r.to_json().dump() << '\n';
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

struct RowContext {
  const RunConfig& cfg;
  const PromptRegistry& prompts;
  const Extractor& extractor;
  ChatClient* llm;
  GenerationParams params;
};

TaskAnswer answer(const RowContext& ctx, const ModelResponse& resp, Task task) {
  TaskAnswer a;
  a.digest = resp.request_digest;
  a.raw_text = resp.raw_text;
  a.outcome = ctx.extractor.extract(resp.raw_text, task, ctx.llm);
  a.label = to_task_label(a.outcome, task);
  return a;
}

void evaluate_row(const RowContext& ctx, const ImageRecord& rec, ChatClient& client, ResultRow& row) {
  const PromptTemplate& tmpl = ctx.prompts.get(row.template_id);
  const bool want_detect = ctx.cfg.task != TaskSelection::Classify;
  const bool want_classify = ctx.cfg.task != TaskSelection::Detect && tmpl.classify_turn.has_value();
  const ImageRef image = attach_file(rec.file, ctx.cfg.resize);
  const std::string tag_base = row.image_id + "/" + row.backend_id + "/" + row.template_id;

  if (ctx.cfg.shared_chat) {
    std::size_t last = 0;
    if (want_detect) last = std::max(last, tmpl.detect_turn);
    if (want_classify) last = std::max(last, *tmpl.classify_turn);
    Conversation conv;
    bool attached = false;
    for (std::size_t t = 0; t <= last; ++t) {
      Turn turn{Role::User, tmpl.turns[t].text, nullptr};
      if (tmpl.turns[t].with_image && !attached) {
        turn.image = image;
        attached = true;
      }
      conv.turns.push_back(std::move(turn));
      const ModelResponse resp = client.complete(conv, ctx.params, tag_base + "/turn" + std::to_string(t));
      if (want_detect && t == tmpl.detect_turn) row.detect = answer(ctx, resp, Task::Detect);
      if (want_classify && t == *tmpl.classify_turn) row.classify = answer(ctx, resp, Task::Classify);
      conv.turns.push_back({Role::Assistant, resp.raw_text, nullptr});
    }
    return;
  }

  for (Task task : {Task::Detect, Task::Classify}) {
    if ((task == Task::Detect && !want_detect) || (task == Task::Classify && !want_classify)) continue;
    Conversation conv;
    conv.turns.push_back({Role::User, tmpl.turns[tmpl.turn_for(task)].text, image});
    const ModelResponse resp = client.complete(conv, ctx.params, tag_base + "/" + std::string(task_name(task)));
    (task == Task::Detect ? row.detect : row.classify) = answer(ctx, resp, task);
  }
}

}  // namespace

void RunConfig::validate() const {
  if (manifest.empty()) throw ConfigError("run config: manifest is required");
  if (backends.empty()) throw ConfigError("run config: at least one backend is required");
  if (templates.empty()) throw ConfigError("run config: at least one template is required");
  std::set<std::string> ids;
  for (const auto& b : backends) {
    if (!ids.insert(backend_id_of(b)).second) throw ConfigError("run config: duplicate backend_id " + backend_id_of(b));
  }
  const auto registry = PromptRegistry::load_default();
  std::set<std::string> seen;
  for (const auto& t : templates) {
    const auto& tmpl = registry.get(t);  // throws ConfigError with the legal ids
    if (!seen.insert(t).second) throw ConfigError("run config: duplicate template " + t);
    if (task == TaskSelection::Classify && !tmpl.supports(Task::Classify)) {
      throw ConfigError("run config: template " + t + " has no classification turn");
    }
  }
  if (concurrency < 1) throw ConfigError("run config: concurrency must be at least 1");
  params();
}

GenerationParams RunConfig::params() const {
  GenerationParams p;
  if (preset == "evaluation") {
    p = GenerationParams::evaluation();
  } else if (preset == "tilense") {
    p = GenerationParams::tilense();
  } else if (preset == "extraction") {
    p = GenerationParams::extraction();
  } else {
    throw ConfigError("run config: unknown preset '" + preset + "' (legal: evaluation, tilense, extraction)");
  }
  if (p.seed) p.seed = static_cast<std::int64_t>(seed);
  return p;
}

json RunConfig::to_json() const {
  json j = {{"manifest", manifest.string()},
            {"backends", backends},
            {"templates", templates},
            {"task", std::string(task_selection_name(task))},
            {"preset", preset},
            {"split", split ? std::string(split_name(*split)) : std::string("all")},
            {"seed", seed},
            {"concurrency", concurrency},
            {"cache_mode", std::string(cache_mode_name(cache_mode))},
            {"out_dir", out_dir.string()},
            {"resize", resize},
            {"shared_chat", shared_chat}};
  if (cache_dir) j["cache_dir"] = cache_dir->string();
  if (extraction_backend) j["extraction_backend"] = *extraction_backend;
  return j;
}

std::string RunConfig::hash() const {
  json j = to_json();
  for (const char* k : {"concurrency", "cache_mode", "cache_dir", "out_dir"}) j.erase(k);
  return sha256_hex(j.dump());
}

RunConfig RunConfig::from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  try {
    RunConfig c;
    if (!j.contains("seed")) throw ConfigError("run config: seed is required");
    c.seed = j.at("seed").get<std::uint64_t>();
    c.manifest = resolve(j.value("manifest", ""), base_dir);
    for (const auto& b : j.value("backends", json::array())) {
      if (b.is_string()) {
        c.backends.push_back(read_json_file(resolve(b.get<std::string>(), base_dir)));
      } else {
        c.backends.push_back(b);
      }
    }
    c.templates = j.value("templates", std::vector<std::string>{});
    if (j.contains("task")) {
      const auto t = parse_task_selection(j["task"].get<std::string>());
      if (!t) throw ConfigError("run config: task must be detect, classify or both");
      c.task = *t;
    }
    c.preset = j.value("preset", "evaluation");
    const std::string split = j.value("split", "all");
    if (split != "all") {
      c.split = parse_split(split);
      if (!c.split || *c.split == SplitTag::Unassigned) throw ConfigError("run config: split must be exp0, main or all");
    }
    c.concurrency = j.value("concurrency", std::size_t{1});
    if (j.contains("cache_mode")) {
      const auto m = parse_cache_mode(j["cache_mode"].get<std::string>());
      if (!m) throw ConfigError("run config: cache_mode must be off, readwrite or replay");
      c.cache_mode = *m;
    }
    if (j.contains("cache_dir")) c.cache_dir = resolve(j["cache_dir"].get<std::string>(), base_dir);
    c.out_dir = resolve(j.value("out_dir", "out"), base_dir);
    c.resize = j.value("resize", false);
    c.shared_chat = j.value("shared_chat", true);
    if (j.contains("extraction_backend") && !j["extraction_backend"].is_null()) {
      const auto& e = j["extraction_backend"];
      c.extraction_backend = e.is_string() ? read_json_file(resolve(e.get<std::string>(), base_dir)) : e;
    }
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
}

RunConfig RunConfig::load(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("run config not found: " + path.string());
  return from_json(read_json_file(path), path.parent_path());
}

json ResultRow::to_json() const {
  return {{"image_id", image_id},
          {"backend_id", backend_id},
          {"template_id", template_id},
          {"presence", presence},
          {"truth", std::string(class_code(truth))},
          {"ok", ok},
          {"error", error},
          {"detect", answer_json(detect)},
          {"classify", answer_json(classify)}};
}

ResultRow ResultRow::from_json(const json& j) {
  ResultRow r;
  r.image_id = j.at("image_id");
  r.backend_id = j.at("backend_id");
  r.template_id = j.at("template_id");
  r.presence = j.at("presence");
  const auto truth = parse_class_code(j.at("truth").get<std::string>());
  if (!truth) throw ConfigError("unknown class " + j.at("truth").dump());
  r.truth = *truth;
  r.ok = j.at("ok");
  r.error = j.value("error", "");
  r.detect = answer_from_json(j.value("detect", json()));
  r.classify = answer_from_json(j.value("classify", json()));
  return r;
}

std::size_t RunResult::failed() const {
  return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [](const ResultRow& r) { return !r.ok; }));
}

std::vector<std::string> RunResult::backend_ids() const {
  std::set<std::string> s;
  for (const auto& r : rows) s.insert(r.backend_id);
  return {s.begin(), s.end()};
}

std::vector<std::string> RunResult::template_ids() const {
  std::set<std::string> s;
  for (const auto& r : rows) s.insert(r.template_id);
  return {s.begin(), s.end()};
}

RunResult RunResult::select_template(std::string_view template_id) const {
  RunResult out;
  out.config_hash = config_hash;
  out.complete = complete;
  for (const auto& r : rows) {
    if (r.template_id == template_id) out.rows.push_back(r);
  }
  return out;
}

RunResult run_evaluation(const RunConfig& cfg, const RunOptions& opts) {
  cfg.validate();
  const GenerationParams params = cfg.params();
  const DatasetManifest manifest = load_manifest(cfg.manifest).filtered(cfg.split);
  if (manifest.empty()) throw ConfigError("run config: no manifest records match the split filter");
  const PromptRegistry prompts = PromptRegistry::load_default();
  const Extractor extractor = Extractor::load_default();

  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  if (ec || !fs::is_directory(cfg.out_dir)) throw IoError("cannot create output directory " + cfg.out_dir.string());

  const std::string config_hash = cfg.hash();
  const fs::path meta_path = cfg.out_dir / "run_meta.json";
  const fs::path results_path = cfg.out_dir / "results.jsonl";
  std::string started = utc_now();
  if (fs::exists(meta_path)) {
    const json meta = read_json_file(meta_path);
    if (meta.value("config_hash", "") != config_hash) {
      throw ConfigError("output directory " + cfg.out_dir.string() + " holds results of a different run config");
    }
    started = meta.value("started", started);
  }
  write_json(meta_path, {{"config_hash", config_hash}, {"config", cfg.to_json()}, {"started", started}});

  std::vector<std::unique_ptr<Backend>> owned;
  std::vector<Backend*> backends;
  for (const auto& spec : cfg.backends) {
    const std::string id = backend_id_of(spec);
    auto it = std::find_if(opts.backends.begin(), opts.backends.end(), [&](Backend* b) { return b->id() == id; });
    if (it != opts.backends.end()) {
      backends.push_back(*it);
    } else {
      owned.push_back(load_backend(spec));
      backends.push_back(owned.back().get());
    }
  }

  ResponseCache cache(cfg.cache_dir.value_or(cfg.out_dir / "cache"));
  RunLedger ledger(cfg.out_dir / "ledger.jsonl");
  ResponseCache* cache_ptr = cfg.cache_mode == CacheMode::Off ? nullptr : &cache;
  std::vector<std::unique_ptr<ChatClient>> clients;
  for (Backend* b : backends) clients.push_back(std::make_unique<ChatClient>(*b, cache_ptr, &ledger, cfg.cache_mode));

  std::unique_ptr<Backend> llm_backend;
  std::unique_ptr<ChatClient> llm_client;
  if (cfg.extraction_backend) {
    const std::string id = backend_id_of(*cfg.extraction_backend);
    auto it = std::find_if(opts.backends.begin(), opts.backends.end(), [&](Backend* b) { return b->id() == id; });
    Backend* b = nullptr;
    if (it != opts.backends.end()) {
      b = *it;
    } else {
      llm_backend = load_backend(*cfg.extraction_backend);
      b = llm_backend.get();
    }
    llm_client = std::make_unique<ChatClient>(*b, cache_ptr, &ledger, cfg.cache_mode);
  }

  std::map<RowKey, ResultRow> done = read_results(results_path);

  struct Job {
    const ImageRecord* rec;
    std::size_t backend;
    std::string template_id;
  };
  std::vector<Job> jobs;
  std::vector<RowKey> wanted;
  for (const auto& rec : manifest.records) {
    for (std::size_t b = 0; b < backends.size(); ++b) {
      for (const auto& t : cfg.templates) {
        RowKey key{rec.id, backends[b]->id(), t};
        wanted.push_back(key);
        auto it = done.find(key);
        if (it == done.end() || !it->second.ok) jobs.push_back({&rec, b, t});
      }
    }
  }
  std::sort(wanted.begin(), wanted.end());

  const RowContext ctx{cfg, prompts, extractor, llm_client.get(), params};
  std::mutex mu;
  std::ofstream append(results_path, std::ios::binary | std::ios::app);
  if (!append) throw IoError("cannot write " + results_path.string());
  std::atomic<std::size_t> claimed{0};
  std::atomic<bool> interrupted{false};

  parallel_for(jobs.size(), cfg.concurrency, [&](std::size_t i) {
    if (opts.row_budget && claimed.fetch_add(1) >= *opts.row_budget) {
      interrupted = true;
      return;
    }
    const Job& job = jobs[i];
    ResultRow row;
    row.image_id = job.rec->id;
    row.backend_id = backends[job.backend]->id();
    row.template_id = job.template_id;
    row.presence = job.rec->presence;
    row.truth = job.rec->pathology;
    try {
      evaluate_row(ctx, *job.rec, *clients[job.backend], row);
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
      row.detect.reset();
      row.classify.reset();
      spdlog::warn("{}/{}/{} failed: {}", row.image_id, row.backend_id, row.template_id, row.error);
    }
    std::lock_guard lock(mu);
    append << row.to_json().dump() << '\n' << std::flush;
    done[key_of(row)] = std::move(row);
  });
  append.close();

  RunResult result;
  result.config_hash = config_hash;
  result.complete = !interrupted;
  result.live_calls = ledger.size();
  for (const auto& key : wanted) {
    auto it = done.find(key);
    if (it != done.end()) result.rows.push_back(it->second);
  }
  write_results(results_path, result.rows);
  json meta = {{"config_hash", config_hash},
               {"config", cfg.to_json()},
               {"started", started},
               {"complete", result.complete},
               {"rows", result.rows.size()},
               {"failed", result.failed()}};
  if (result.complete) meta["finished"] = utc_now();
  write_json(meta_path, meta);

  if (result.complete && !result.rows.empty() && result.failed() == result.rows.size()) {
    throw UnreachableError("every row failed; backends unreachable (first error: " + result.rows.front().error + ")");
  }
  return result;
}

RunResult load_run(const fs::path& out_dir) {
  const fs::path results_path = out_dir / "results.jsonl";
  if (!fs::exists(results_path)) throw ConfigError("no results.jsonl in " + out_dir.string());
  RunResult r;
  for (auto& [key, row] : read_results(results_path)) r.rows.push_back(std::move(row));
  const fs::path meta_path = out_dir / "run_meta.json";
  if (fs::exists(meta_path)) {
    const json meta = read_json_file(meta_path);
    r.config_hash = meta.value("config_hash", "");
    r.complete = meta.value("complete", true);
  }
  return r;
}

std::optional<double> relative_change(double f1_simple, double f1_engineered) {
  if (f1_simple == 0.0) return std::nullopt;
  return (f1_engineered - f1_simple) / f1_simple * 100.0;
}

std::string format_change(const std::optional<double>& pct) {
  if (!pct) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%+.1f%%", *pct);
  return buf;
}

namespace {

std::string only_template(const RunResult& r, const char* which) {
  const auto ids = r.template_ids();
  if (ids.size() != 1) {
    throw ConfigError(std::string("compare_prompts: the ") + which + " result must hold exactly one template, found " +
                      std::to_string(ids.size()));
  }
  return ids.front();
}

std::set<std::string> images_of(const RunResult& r, const std::string& backend) {
  std::set<std::string> s;
  for (const auto& row : r.rows) {
    if (row.backend_id == backend) s.insert(row.image_id);
  }
  return s;
}

std::pair<std::optional<double>, std::optional<double>> scores_of(const RunResult& r, const std::string& backend) {
  std::vector<TaskLabel> dpred, cpred;
  std::vector<bool> presence;
  std::vector<PathologyClass> truth;
  for (const auto& row : r.rows) {
    if (row.backend_id != backend || !row.ok) continue;
    if (row.detect) {
      dpred.push_back(row.detect->label);
      presence.push_back(row.presence);
    }
    if (row.classify) {
      cpred.push_back(row.classify->label);
      truth.push_back(row.truth);
    }
  }
  std::optional<double> d, c;
  if (!dpred.empty()) {
    auto pres = std::make_unique<bool[]>(presence.size());
    std::copy(presence.begin(), presence.end(), pres.get());
    d = detection_report(dpred, std::span<const bool>(pres.get(), presence.size())).f1;
  }
  if (!cpred.empty()) {
    const auto rep = one_vs_all(cpred, truth);
    std::uint64_t support = 0;
    for (const auto& [cls, n] : rep.supports) support += n;
    if (support > 0) c = rep.weighted_f1;
  }
  return {d, c};
}

}  // namespace

std::vector<PromptComparison> compare_prompts(const RunResult& simple, const RunResult& engineered) {
  only_template(simple, "simple");
  only_template(engineered, "engineered");
  if (simple.backend_ids() != engineered.backend_ids()) throw ConfigError("compare_prompts: results cover different backends");
  std::vector<PromptComparison> out;
  for (const auto& backend : simple.backend_ids()) {
    if (images_of(simple, backend) != images_of(engineered, backend)) {
      throw ConfigError("compare_prompts: image sets differ for backend " + backend);
    }
    const auto [sd, sc] = scores_of(simple, backend);
    const auto [ed, ec] = scores_of(engineered, backend);
    if (sd && ed) out.push_back({backend, Task::Detect, *sd, *ed, relative_change(*sd, *ed)});
    if (sc && ec) out.push_back({backend, Task::Classify, *sc, *ec, relative_change(*sc, *ec)});
  }
  return out;
}

}  // namespace polypeval
