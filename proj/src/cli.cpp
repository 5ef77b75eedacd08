#include "polypeval/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "polypeval/csv.hpp"
#include "polypeval/dataset.hpp"
#include "polypeval/errors.hpp"
#include "polypeval/extraction.hpp"
#include "polypeval/mock_backend.hpp"
#include "polypeval/prompts.hpp"
#include "polypeval/remote_backend.hpp"
#include "polypeval/report.hpp"
#include "polypeval/runner.hpp"
#include "polypeval/tilense.hpp"

namespace polypeval {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Offline stand-in used by `--backend mock` when no config provides one.
const char* kBuiltinMock = R"({
  "type": "mock",
  "backend_id": "mock",
  "rules": [
    {"prompt_contains": "select one of the following options", "reply": "3. adenomatous-tubular polyp"},
    {"prompt_contains": "pathology class", "reply": "This looks like a tubular adenoma."}
  ],
  "default": "The image shows a colonic polyp."
})";

fs::path data_dir() {
  if (const char* env = std::getenv("POLYPEVAL_DATA"); env && *env) return env;
  return POLYPEVAL_DATA_DIR;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

/// A backend argument is a config file, a backend_id of the run config, or
/// the word "mock".
json resolve_backend(const std::string& arg, const std::vector<json>& known) {
  if (fs::is_regular_file(arg)) return read_json(arg);
  for (const auto& b : known) {
    if (b.value("backend_id", "") == arg) return b;
  }
  if (arg == "mock") return json::parse(kBuiltinMock);
  throw ConfigError("unknown backend '" + arg + "': not a config file, a backend_id of the run config, or 'mock'");
}

struct Globals {
  std::string config;
  std::string backend;
  std::optional<std::uint64_t> seed;
  std::string cache_dir;
  std::string out_dir;
};

int evaluate(const Globals& g, const std::string& split, const std::string& task, std::optional<std::size_t> concurrency,
             bool resize, std::ostream& out) {
  if (g.config.empty()) throw ConfigError("evaluate needs --config <run.json>");
  RunConfig cfg = RunConfig::load(g.config);
  if (!g.backend.empty()) cfg.backends = {resolve_backend(g.backend, cfg.backends)};
  if (g.seed) cfg.seed = *g.seed;
  if (!g.cache_dir.empty()) cfg.cache_dir = g.cache_dir;
  if (!g.out_dir.empty()) cfg.out_dir = g.out_dir;
  if (!split.empty()) {
    if (split == "all") {
      cfg.split.reset();
    } else {
      cfg.split = parse_split(split);
      if (!cfg.split || *cfg.split == SplitTag::Unassigned) throw ConfigError("--split must be exp0, main or all");
    }
  }
  if (!task.empty()) {
    const auto t = parse_task_selection(task);
    if (!t) throw ConfigError("--task must be detect, classify or both");
    cfg.task = *t;
  }
  if (concurrency) cfg.concurrency = *concurrency;
  if (resize) cfg.resize = true;

  const RunResult result = run_evaluation(cfg);
  const ReportBundle bundle = build_report(result, cfg.out_dir / "tilense");
  const auto files = write_report(bundle, cfg.out_dir / "report");
  out << "rows: " << result.rows.size() << " (failed " << result.failed() << "), live calls: " << result.live_calls << "\n";
  for (const auto& s : bundle.summaries) {
    out << s.backend_id << " " << s.template_id;
    if (s.detection) out << "  detect F1 " << std::fixed << std::setprecision(3) << s.detection->f1;
    if (s.classification) out << "  classify weighted F1 " << std::fixed << std::setprecision(3) << s.classification->weighted_f1;
    out << "\n";
  }
  for (const auto& c : bundle.comparisons) {
    out << "prompt comparison " << c.backend_id << " " << task_name(c.task) << ": " << format_change(c.change_pct) << "\n";
  }
  out << "report: " << (cfg.out_dir / "report").string() << " (" << files.size() << " files)\n";
  return kExitOk;
}

struct TilenseArgs {
  std::vector<std::string> images;
  std::string manifest;
  std::string prompt = "engineered_detect";
  int runs = 5;
  std::string fill = "black";
  std::string normalization = "mean";
  double opacity = 0.6;
  std::size_t concurrency = 1;
  std::string cache_mode = "readwrite";
  bool resize = false;
};

int tilense(const Globals& g, const TilenseArgs& a, std::ostream& out, std::ostream& err) {
  TilenseOptions opts;
  opts.n_runs = a.runs;
  if (opts.n_runs < 1) throw ConfigError("--runs must be at least 1");
  const auto fill = parse_fill(a.fill);
  if (!fill) throw ConfigError("--fill must be black or mean");
  opts.fill = *fill;
  const auto norm = parse_normalization(a.normalization);
  if (!norm) throw ConfigError("--normalization must be mean or max");
  opts.normalization = *norm;
  if (a.opacity < 0.0 || a.opacity > 1.0) throw ConfigError("--opacity must lie in [0, 1]");
  opts.overlay_opacity = a.opacity;
  opts.concurrency = std::max<std::size_t>(a.concurrency, 1);
  opts.prompt_id = a.prompt;
  const auto mode = parse_cache_mode(a.cache_mode);
  if (!mode) throw ConfigError("--cache-mode must be off, readwrite or replay");

  std::vector<json> known;
  fs::path out_dir = g.out_dir.empty() ? fs::path("out") : fs::path(g.out_dir);
  if (!g.config.empty()) {
    const RunConfig cfg = RunConfig::load(g.config);
    known = cfg.backends;
    if (g.out_dir.empty()) out_dir = cfg.out_dir;
  }
  std::string backend_arg = g.backend;
  if (backend_arg.empty()) {
    if (known.size() != 1) throw ConfigError("tilense needs --backend (or a run config with exactly one backend)");
    backend_arg = known.front().at("backend_id").get<std::string>();
  }
  auto backend = load_backend(resolve_backend(backend_arg, known));

  const PromptRegistry prompts = PromptRegistry::load_default();
  const PromptTemplate& tmpl = prompts.get(a.prompt);
  const std::string prompt_text = tmpl.turns[tmpl.detect_turn].text;
  const Extractor extractor = Extractor::load_default();

  std::vector<std::pair<std::string, fs::path>> items;
  if (!a.manifest.empty()) {
    for (const auto& r : load_manifest(a.manifest).records) items.emplace_back(r.id, r.file);
  }
  for (const auto& img : a.images) items.emplace_back(fs::path(img).stem().string(), img);
  if (items.empty()) throw ConfigError("tilense needs at least one image or --manifest");

  const fs::path tdir = out_dir / "tilense";
  ResponseCache cache(g.cache_dir.empty() ? out_dir / "cache" : fs::path(g.cache_dir));
  RunLedger ledger(out_dir / "tilense_ledger.jsonl");
  ChatClient client(*backend, *mode == CacheMode::Off ? nullptr : &cache, &ledger, *mode);
  const TilenseProbe probe(client, extractor, prompt_text);

  std::size_t failed = 0;
  bool network = false;
  for (const auto& [id, path] : items) {
    try {
      const ImageRef ref = attach_file(path, a.resize);
      const TilenseResult r = run_tilense(probe, ref->pixels, id, opts);
      const TilenseFiles files = write_tilense_outputs(tdir, ref->pixels, r, opts);
      out << id << ": base " << label_name(r.scores.base.answer) << (r.scores.base.low_confidence ? " (low confidence)" : "")
          << ", tiles [";
      for (std::size_t i = 0; i < r.scores.per_tile.size(); ++i) out << (i ? "," : "") << r.scores.per_tile[i];
      out << "] -> " << files.overlay.string() << "\n";
    } catch (const BackendError& e) {
      ++failed;
      network = true;
      err << id << ": backend failure: " << e.what() << "\n";
    } catch (const std::exception& e) {
      ++failed;
      err << id << ": failed: " << e.what() << "\n";
    }
  }
  if (failed == 0) return kExitOk;
  err << failed << " of " << items.size() << " images failed\n";
  return network ? kExitNetwork : kExitFailure;
}

struct ExtractArgs {
  std::string input;
  std::string task = "classify";
  std::string output;
  std::size_t audit = 0;
  std::string llm_backend;
};

int extract(const Globals& g, const ExtractArgs& a, std::ostream& out) {
  const auto task = parse_task(a.task);
  if (!task) throw ConfigError("--task must be detect or classify");
  if (!fs::exists(a.input)) throw ConfigError("input not found: " + a.input);
  const csv::Table t = csv::read_file(a.input);
  const std::size_t c_id = t.column("id"), c_text = t.column("raw_text");
  std::optional<std::size_t> c_expected;
  if (std::find(t.header.begin(), t.header.end(), "expected_category") != t.header.end()) {
    c_expected = t.column("expected_category");
  }
  const Extractor extractor = Extractor::load_default();
  std::unique_ptr<Backend> llm_backend;
  std::unique_ptr<RunLedger> ledger;
  std::unique_ptr<ChatClient> llm;
  const fs::path out_dir = g.out_dir.empty() ? fs::path("out") : fs::path(g.out_dir);
  fs::create_directories(out_dir);
  if (!a.llm_backend.empty()) {
    llm_backend = load_backend(resolve_backend(a.llm_backend, {}));
    ledger = std::make_unique<RunLedger>(out_dir / "extraction_ledger.jsonl");
    llm = std::make_unique<ChatClient>(*llm_backend, nullptr, ledger.get(), CacheMode::Off);
  }

  const fs::path output = a.output.empty() ? out_dir / "extraction.csv" : fs::path(a.output);
  std::ofstream os(output, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + output.string());
  csv::write_row(os, {"id", "category", "pathology", "label", "method"});
  std::vector<AuditItem> items;
  std::size_t mismatches = 0;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& row = t.rows[i];
    if (row.size() <= std::max(c_id, c_text)) throw ConfigError(a.input + " line " + std::to_string(t.line_numbers[i]) + ": missing fields");
    const ExtractionOutcome o = extractor.extract(row[c_text], *task, llm.get());
    csv::write_row(os, {row[c_id], std::string(category_name(o.category)),
                        o.pathology ? std::string(class_code(*o.pathology)) : std::string(),
                        std::string(label_name(to_task_label(o, *task))), o.method == ExtractionMethod::Rules ? "rules" : "llm"});
    items.push_back({row[c_id], row[c_text], o});
    if (c_expected && *c_expected < row.size() && !row[*c_expected].empty() && row[*c_expected] != category_name(o.category)) {
      ++mismatches;
      out << "mismatch " << row[c_id] << ": expected " << row[*c_expected] << ", got " << category_name(o.category) << "\n";
    }
  }
  out << items.size() << " responses -> " << output.string() << "\n";
  if (a.audit > 0) {
    const auto sample = sample_for_audit(items, std::min(a.audit, items.size()), g.seed.value_or(123));
    write_audit_csv(sample, out_dir / "audit.csv");
    out << sample.size() << " items sampled for audit -> " << (out_dir / "audit.csv").string() << "\n";
  }
  if (mismatches > 0) {
    out << mismatches << " extraction audit mismatches\n";
    return kExitVerification;
  }
  return kExitOk;
}

void print_checks(const FixtureReport& rep, bool percent, std::ostream& out) {
  char buf[256];
  for (const auto& c : rep.checks) {
    if (c.not_applicable) {
      std::snprintf(buf, sizeof buf, "%-16s %-9s computed       NA  reported       NA  ok\n", c.model.c_str(), c.key.c_str());
      out << buf;
      continue;
    }
    std::snprintf(buf, sizeof buf, percent ? "%-16s %-9s computed %8.2f  reported %8.2f  delta %+8.3f%s  %s\n"
                                           : "%-20s %-9s computed %.4f  reported %.4f  delta %+.4f%s  %s\n",
                  c.model.c_str(), c.key.c_str(), c.computed, c.reported, c.delta,
                  c.expected_delta ? " (documented)" : "", c.pass ? "ok" : "FAIL");
    out << buf;
  }
}

int verify_fixtures(const std::string& counts_path, const std::string& changes_path, double tol, std::ostream& out,
                    std::ostream& err) {
  const fs::path counts = counts_path.empty() ? data_dir() / "fixtures" / "published_counts.csv" : fs::path(counts_path);
  const FixtureReport rep = verify_counts(load_count_fixture(counts), tol, tol);
  out << "count fixture: " << counts.string() << "\n";
  print_checks(rep, false, out);
  bool ok = rep.all_pass();
  for (const auto& c : rep.checks) {
    if (!c.pass) err << counts.string() << " line " << c.line << ": " << c.model << " " << c.key << " out of tolerance\n";
  }
  const fs::path changes = changes_path.empty() ? data_dir() / "fixtures" / "prompt_change.csv" : fs::path(changes_path);
  if (!changes_path.empty() || fs::exists(changes)) {
    const FixtureReport prep = verify_prompt_changes(load_prompt_change_fixture(changes));
    out << "prompt comparison fixture: " << changes.string() << "\n";
    print_checks(prep, true, out);
    for (const auto& c : prep.checks) {
      if (!c.pass) err << changes.string() << " line " << c.line << ": " << c.model << " " << c.key << " out of tolerance\n";
    }
    ok = ok && prep.all_pass();
  }
  return ok ? kExitOk : kExitVerification;
}

int report(const Globals& g, std::ostream& out) {
  fs::path dir = g.out_dir;
  if (dir.empty() && !g.config.empty()) dir = RunConfig::load(g.config).out_dir;
  if (dir.empty()) throw ConfigError("report needs --out-dir (a run directory) or --config");
  const RunResult result = load_run(dir);
  const auto files = write_report(build_report(result, dir / "tilense"), dir / "report");
  out << result.rows.size() << " rows -> " << (dir / "report").string() << " (" << files.size() << " files)\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Zero-shot VLM evaluation harness with tile-occlusion heatmaps", "polypeval"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "Run config (JSON)");
  app.add_option("--backend", g.backend, "Backend config file, backend_id, or 'mock'");
  app.add_option("--seed", g.seed, "Seed override");
  app.add_option("--cache-dir", g.cache_dir, "Response cache directory");
  app.add_option("--out-dir", g.out_dir, "Output directory");

  auto* ev = app.add_subcommand("evaluate", "Run the prompt protocol over a manifest and write the report");
  std::string split, task;
  std::optional<std::size_t> concurrency;
  bool resize = false;
  ev->add_option("--split", split, "exp0, main or all");
  ev->add_option("--task", task, "detect, classify or both");
  ev->add_option("--concurrency", concurrency, "Rows in flight");
  ev->add_flag("--resize", resize, "Standardize images to 300x300 before sending");

  auto* tl = app.add_subcommand("tilense", "Tile-occlusion heatmaps for one or more images");
  TilenseArgs ta;
  tl->add_option("images", ta.images, "Image files");
  tl->add_option("--manifest", ta.manifest, "Manifest CSV instead of (or besides) image files");
  tl->add_option("--prompt", ta.prompt, "Template whose detection turn is asked");
  tl->add_option("--runs", ta.runs, "Samples per configuration");
  tl->add_option("--fill", ta.fill, "black or mean");
  tl->add_option("--normalization", ta.normalization, "mean or max over covering tiles");
  tl->add_option("--opacity", ta.opacity, "Overlay opacity at full heat");
  tl->add_option("--concurrency", ta.concurrency, "Requests in flight per image");
  tl->add_option("--cache-mode", ta.cache_mode, "off, readwrite or replay");
  tl->add_flag("--resize", ta.resize, "Standardize images to 300x300 first");

  auto* ex = app.add_subcommand("extract", "Reduce free-text answers to categories");
  ExtractArgs ea;
  ex->add_option("--input", ea.input, "CSV with id,raw_text[,expected_category]")->required();
  ex->add_option("--task", ea.task, "detect or classify");
  ex->add_option("--output", ea.output, "Output CSV");
  ex->add_option("--audit", ea.audit, "Sample this many items for manual audit");
  ex->add_option("--llm-backend", ea.llm_backend, "Backend consulted when the rules are unsure");

  auto* vf = app.add_subcommand("verify-fixtures", "Recompute published metrics from the fixture counts");
  std::string counts_path, changes_path;
  double tol = 0.005;
  vf->add_option("--fixture", counts_path, "Per-model confusion count fixture CSV");
  vf->add_option("--prompt-changes", changes_path, "Prompt comparison fixture CSV");
  vf->add_option("--tolerance", tol, "Absolute F1 tolerance");

  auto* rp = app.add_subcommand("report", "Regenerate the report of a finished run");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n" << app.help();
    return kExitConfig;
  }

  try {
    if (ev->parsed()) return evaluate(g, split, task, concurrency, resize, out);
    if (tl->parsed()) return tilense(g, ta, out, err);
    if (ex->parsed()) return extract(g, ea, out);
    if (vf->parsed()) return verify_fixtures(counts_path, changes_path, tol, out, err);
    if (rp->parsed()) return report(g, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n" << app.help();
    return kExitConfig;
  } catch (const UnreachableError& e) {
    err << "network error: " << e.what() << "\n";
    return kExitNetwork;
  } catch (const BackendError& e) {
    err << "backend error: " << e.what() << "\n";
    return kExitNetwork;
  } catch (const VerificationError& e) {
    err << "verification failed: " << e.what() << "\n";
    return kExitVerification;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace polypeval
