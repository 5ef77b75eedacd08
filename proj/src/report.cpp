#include "polypeval/report.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "polypeval/csv.hpp"
#include "polypeval/errors.hpp"

namespace polypeval {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

double parse_number(const std::string& field, const fs::path& path, std::size_t line, std::string_view column) {
  double v = 0.0;
  const char* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data() + (field.starts_with('+') ? 1 : 0), end, v);
  if (field.empty() || ec != std::errc() || ptr != end || !std::isfinite(v)) {
    throw ConfigError(path.string() + " line " + std::to_string(line) + ": bad " + std::string(column) + " '" + field + "'");
  }
  return v;
}

std::uint64_t parse_count(const std::string& field, const fs::path& path, std::size_t line, std::string_view column) {
  std::uint64_t v = 0;
  const char* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, v);
  if (field.empty() || ec != std::errc() || ptr != end) {
    throw ConfigError(path.string() + " line " + std::to_string(line) + ": bad " + std::string(column) + " '" + field + "'");
  }
  return v;
}

bool within(double delta, const std::optional<double>& expected, double tol) {
  // Small slack so that values sitting exactly on the tolerance pass despite
  // binary rounding.
  constexpr double eps = 1e-9;
  if (std::abs(delta) <= tol + eps) return true;
  return expected && std::abs(delta - *expected) <= tol + eps;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

json roc_json(const std::vector<std::pair<double, double>>& pts) {
  json a = json::array();
  for (const auto& [fpr, tpr] : pts) a.push_back({fpr, tpr});
  return a;
}

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

/// Ordinal score of a categorical answer: committed yes 1, no answer 0.5,
/// committed no 0.
double answer_score(TaskLabel pred, TaskLabel positive) {
  if (pred == positive) return 1.0;
  if (pred == TaskLabel::NoAnswer || pred == TaskLabel::TwoOptions) return 0.5;
  return 0.0;
}

struct Scored {
  std::optional<double> auroc;
  std::vector<std::pair<double, double>> roc;
};

Scored score_curve(const std::vector<double>& scores, const std::vector<bool>& truths) {
  auto t = std::make_unique<bool[]>(truths.size());
  std::copy(truths.begin(), truths.end(), t.get());
  const std::span<const bool> ts(t.get(), truths.size());
  const bool has_pos = std::find(truths.begin(), truths.end(), true) != truths.end();
  const bool has_neg = std::find(truths.begin(), truths.end(), false) != truths.end();
  if (!has_pos || !has_neg) return {};
  return {auroc_from_scores(scores, ts), roc_points(scores, ts)};
}

std::string file_stem(const ModelSummary& s, std::string_view task) {
  std::string name = s.backend_id + "__" + s.template_id + "__" + std::string(task);
  for (char& c : name) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.')) c = '_';
  }
  return name;
}

void write_text(const fs::path& path, const std::string& text, std::vector<fs::path>& written) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
  written.push_back(path);
}

// 3x5 digit glyphs, one row per 3-bit mask (MSB = left column).
constexpr std::array<std::array<std::uint8_t, 5>, 10> kDigits = {{
    {7, 5, 5, 5, 7}, {2, 6, 2, 2, 7}, {7, 1, 7, 4, 7}, {7, 1, 7, 1, 7}, {5, 5, 7, 1, 1},
    {7, 4, 7, 1, 7}, {7, 4, 7, 5, 7}, {7, 1, 1, 1, 1}, {7, 5, 7, 5, 7}, {7, 5, 7, 1, 7},
}};

void draw_number(Image& img, std::uint64_t value, int cx, int cy, int scale, Rgb color) {
  const std::string text = std::to_string(value);
  const int glyph_w = 3 * scale;
  const int gap = scale;
  const int total_w = static_cast<int>(text.size()) * (glyph_w + gap) - gap;
  int x0 = cx - total_w / 2;
  const int y0 = cy - 5 * scale / 2;
  for (char ch : text) {
    const auto& glyph = kDigits[static_cast<std::size_t>(ch - '0')];
    for (int gy = 0; gy < 5; ++gy) {
      for (int gx = 0; gx < 3; ++gx) {
        if (!(glyph[gy] & (4 >> gx))) continue;
        for (int dy = 0; dy < scale; ++dy) {
          for (int dx = 0; dx < scale; ++dx) {
            const int x = x0 + gx * scale + dx;
            const int y = y0 + gy * scale + dy;
            if (x >= 0 && y >= 0 && x < img.width && y < img.height) img.set(x, y, color);
          }
        }
      }
    }
    x0 += glyph_w + gap;
  }
}

}  // namespace

// ---- fixtures ----

std::vector<CountRow> load_count_fixture(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("fixture not found: " + path.string());
  const csv::Table t = csv::read_file(path);
  const std::size_t c_model = t.column("model"), c_key = t.column("task_or_class"), c_tp = t.column("tp"),
                    c_fp = t.column("fp"), c_tn = t.column("tn"), c_fn = t.column("fn"), c_rep = t.column("reported_f1");
  std::optional<std::size_t> c_exp;
  if (std::find(t.header.begin(), t.header.end(), "expected_delta") != t.header.end()) c_exp = t.column("expected_delta");

  std::vector<CountRow> rows;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    const std::size_t line = t.line_numbers[i];
    if (r.size() != t.header.size()) {
      throw ConfigError(path.string() + " line " + std::to_string(line) + ": expected " + std::to_string(t.header.size()) +
                        " fields, got " + std::to_string(r.size()));
    }
    CountRow row;
    row.model = r[c_model];
    row.key = r[c_key];
    row.line = line;
    if (row.model.empty()) throw ConfigError(path.string() + " line " + std::to_string(line) + ": empty model");
    if (row.key != "detection" && row.key != "weighted" && !parse_class_code(row.key)) {
      throw ConfigError(path.string() + " line " + std::to_string(line) + ": unknown task_or_class '" + row.key + "'");
    }
    if (row.key != "weighted") {
      row.counts = {parse_count(r[c_tp], path, line, "tp"), parse_count(r[c_fp], path, line, "fp"),
                    parse_count(r[c_tn], path, line, "tn"), parse_count(r[c_fn], path, line, "fn")};
    }
    row.reported = parse_number(r[c_rep], path, line, "reported_f1");
    if (c_exp && !r[*c_exp].empty()) row.expected_delta = parse_number(r[*c_exp], path, line, "expected_delta");
    rows.push_back(std::move(row));
  }
  return rows;
}

bool FixtureReport::all_pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const FixtureCheck& c) { return c.pass; });
}

FixtureReport verify_counts(const std::vector<CountRow>& rows, double tol_f1, double tol_weighted) {
  FixtureReport rep;
  for (const auto& row : rows) {
    FixtureCheck c{row.model, row.key, 0.0, row.reported, 0.0, row.expected_delta, row.line, false};
    if (row.key == "weighted") {
      std::map<PathologyClass, double> scores;
      std::map<PathologyClass, std::uint64_t> supports;
      for (const auto& other : rows) {
        if (other.model != row.model) continue;
        if (const auto cls = parse_class_code(other.key); cls && *cls != PathologyClass::Normal) {
          scores[*cls] = f1(other.counts);
          supports[*cls] = other.counts.support();
        }
      }
      if (scores.empty()) {
        throw ConfigError("fixture line " + std::to_string(row.line) + ": weighted row for " + row.model +
                          " has no class rows");
      }
      c.computed = weighted_f1(scores, supports);
      c.delta = c.computed - c.reported;
      c.pass = within(c.delta, c.expected_delta, tol_weighted);
    } else {
      c.computed = f1(row.counts);
      c.delta = c.computed - c.reported;
      c.pass = within(c.delta, c.expected_delta, tol_f1);
    }
    rep.checks.push_back(std::move(c));
  }
  return rep;
}

std::vector<PromptChangeRow> load_prompt_change_fixture(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("fixture not found: " + path.string());
  const csv::Table t = csv::read_file(path);
  const std::size_t c_backend = t.column("backend"), c_task = t.column("task"), c_s = t.column("f1_simple"),
                    c_e = t.column("f1_engineered"), c_rep = t.column("reported_change");
  std::optional<std::size_t> c_exp;
  if (std::find(t.header.begin(), t.header.end(), "expected_delta") != t.header.end()) c_exp = t.column("expected_delta");
  std::vector<PromptChangeRow> rows;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    const std::size_t line = t.line_numbers[i];
    if (r.size() != t.header.size()) throw ConfigError(path.string() + " line " + std::to_string(line) + ": wrong field count");
    PromptChangeRow row;
    row.backend = r[c_backend];
    row.line = line;
    const auto task = parse_task(r[c_task]);
    if (!task) throw ConfigError(path.string() + " line " + std::to_string(line) + ": unknown task '" + r[c_task] + "'");
    row.task = *task;
    row.f1_simple = parse_number(r[c_s], path, line, "f1_simple");
    row.f1_engineered = parse_number(r[c_e], path, line, "f1_engineered");
    std::string rep = r[c_rep];
    if (rep != "NA") {
      if (rep.ends_with('%')) rep.pop_back();
      row.reported_pct = parse_number(rep, path, line, "reported_change");
    }
    if (c_exp && !r[*c_exp].empty()) row.expected_delta = parse_number(r[*c_exp], path, line, "expected_delta");
    rows.push_back(std::move(row));
  }
  return rows;
}

FixtureReport verify_prompt_changes(const std::vector<PromptChangeRow>& rows, double tol_pct) {
  FixtureReport rep;
  for (const auto& row : rows) {
    const auto change = relative_change(row.f1_simple, row.f1_engineered);
    FixtureCheck c{row.backend, std::string(task_name(row.task)), change.value_or(0.0), row.reported_pct.value_or(0.0), 0.0,
                   row.expected_delta, row.line, false};
    if (!change || !row.reported_pct) {
      c.pass = !change && !row.reported_pct;
      c.not_applicable = c.pass;
    } else {
      c.delta = *change - *row.reported_pct;
      c.pass = within(c.delta, c.expected_delta, tol_pct);
    }
    rep.checks.push_back(std::move(c));
  }
  return rep;
}

// ---- report bundle ----

ReportBundle build_report(const RunResult& result, const fs::path& tilense_dir) {
  ReportBundle bundle;
  std::map<std::pair<std::string, std::string>, std::vector<const ResultRow*>> groups;
  for (const auto& row : result.rows) groups[{row.backend_id, row.template_id}].push_back(&row);

  for (const auto& [key, rows] : groups) {
    ModelSummary s;
    s.backend_id = key.first;
    s.template_id = key.second;
    s.rows = rows.size();
    std::vector<TaskLabel> dpred, cpred;
    std::vector<bool> presence;
    std::vector<PathologyClass> truth;
    for (const ResultRow* r : rows) {
      if (!r->ok) {
        ++s.failed;
        continue;
      }
      if (r->detect) {
        dpred.push_back(r->detect->label);
        presence.push_back(r->presence);
      }
      if (r->classify) {
        cpred.push_back(r->classify->label);
        truth.push_back(r->truth);
      }
    }
    if (!dpred.empty()) {
      auto pres = std::make_unique<bool[]>(presence.size());
      std::copy(presence.begin(), presence.end(), pres.get());
      s.detection = detection_report(dpred, std::span<const bool>(pres.get(), presence.size()));
      if (s.detection->counts.support() > 0 && s.detection->counts.tn + s.detection->counts.fp > 0) {
        s.detection_point_auroc = point_auroc(s.detection->counts);
      }
      std::vector<double> scores;
      for (auto p : dpred) scores.push_back(answer_score(p, TaskLabel::Polyp));
      auto curve = score_curve(scores, presence);
      s.detection_auroc = curve.auroc;
      s.detection_roc = std::move(curve.roc);
    }
    if (!cpred.empty()) {
      s.classification = one_vs_all(cpred, truth);
      for (auto cls : kPolypClasses) {
        std::vector<double> scores;
        std::vector<bool> truths;
        for (std::size_t i = 0; i < cpred.size(); ++i) {
          scores.push_back(answer_score(cpred[i], label_for_class(cls)));
          truths.push_back(truth[i] == cls);
        }
        auto curve = score_curve(scores, truths);
        s.class_auroc[cls] = curve.auroc;
        s.class_roc[cls] = std::move(curve.roc);
      }
    }
    bundle.summaries.push_back(std::move(s));
  }

  const auto templates = result.template_ids();
  auto has = [&](const std::string& t) { return std::find(templates.begin(), templates.end(), t) != templates.end(); };
  for (const char* suffix : {"detect", "classify"}) {
    const std::string simple = std::string("simple_") + suffix, eng = std::string("engineered_") + suffix;
    if (has(simple) && has(eng)) {
      for (auto& c : compare_prompts(result.select_template(simple), result.select_template(eng))) {
        bundle.comparisons.push_back(std::move(c));
      }
    }
  }

  if (!tilense_dir.empty() && fs::is_directory(tilense_dir)) {
    std::vector<fs::path> sidecars;
    for (const auto& e : fs::directory_iterator(tilense_dir)) {
      const std::string name = e.path().filename().string();
      if (e.is_regular_file() && name.ends_with(".tilense.json")) sidecars.push_back(e.path());
    }
    std::sort(sidecars.begin(), sidecars.end());
    for (const auto& p : sidecars) {
      std::ifstream in(p);
      json j = json::parse(in, nullptr, false);
      if (j.is_discarded()) continue;
      const std::string id = j.value("image_id", "");
      bundle.tilense_index.push_back({{"image_id", id},
                                      {"base_answer", j.value("base_answer", "")},
                                      {"low_confidence", j.value("low_confidence", false)},
                                      {"per_tile", j.value("per_tile", json::array())},
                                      {"overlay", id + ".tilense.png"},
                                      {"heat", id + ".tilense.heat.png"},
                                      {"sidecar", p.filename().string()}});
    }
  }
  return bundle;
}

Image render_matrix(const std::vector<std::vector<std::uint64_t>>& cells) {
  constexpr int cell_w = 56, cell_h = 36, border = 2, scale = 3;
  const int rows = static_cast<int>(cells.size());
  const int cols = rows ? static_cast<int>(cells.front().size()) : 0;
  Image img(std::max(1, cols * cell_w + border), std::max(1, rows * cell_h + border), Rgb{128, 128, 128});
  std::uint64_t peak = 0;
  for (const auto& r : cells) {
    for (auto v : r) peak = std::max(peak, v);
  }
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const std::uint64_t v = cells[r][c];
      const double t = peak ? static_cast<double>(v) / static_cast<double>(peak) : 0.0;
      const Rgb fill{static_cast<std::uint8_t>(std::lround(255 - 225 * t)), static_cast<std::uint8_t>(std::lround(255 - 180 * t)),
                     255};
      for (int y = r * cell_h + border; y < (r + 1) * cell_h; ++y) {
        for (int x = c * cell_w + border; x < (c + 1) * cell_w; ++x) img.set(x, y, fill);
      }
      const Rgb ink = t > 0.6 ? Rgb{255, 255, 255} : Rgb{0, 0, 0};
      draw_number(img, v, c * cell_w + (cell_w + border) / 2, r * cell_h + (cell_h + border) / 2, scale, ink);
    }
  }
  return img;
}

std::vector<fs::path> write_report(const ReportBundle& bundle, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir / "confusion", ec);
  if (!ec) fs::create_directories(dir / "roc", ec);
  if (ec) throw IoError("cannot create report directory " + dir.string() + ": " + ec.message());
  std::vector<fs::path> written;

  std::string metrics = "backend,template,task,class,n,tp,fp,tn,fn,precision,recall,specificity,f1,point_auroc,auroc,weighted_f1\n";
  json metrics_json = json::array();
  for (const auto& s : bundle.summaries) {
    json entry = {{"backend", s.backend_id}, {"template", s.template_id}, {"rows", s.rows}, {"failed", s.failed}};
    if (s.detection) {
      const auto& d = *s.detection;
      metrics += csv::escape(s.backend_id) + "," + s.template_id + ",detect,polyp," + std::to_string(d.counts.total()) + "," +
                 std::to_string(d.counts.tp) + "," + std::to_string(d.counts.fp) + "," + std::to_string(d.counts.tn) + "," +
                 std::to_string(d.counts.fn) + "," + fmt(precision(d.counts)) + "," + fmt(recall(d.counts)) + "," +
                 fmt(specificity(d.counts)) + "," + fmt(d.f1) + "," + fmt(s.detection_point_auroc) + "," +
                 fmt(s.detection_auroc) + ",\n";
      json dj = d.to_json();
      dj["point_auroc"] = opt_json(s.detection_point_auroc);
      dj["auroc"] = opt_json(s.detection_auroc);
      entry["detection"] = dj;

      std::vector<std::vector<std::uint64_t>> cells;
      std::string m = "predicted\\truth,Polyp,Normal\n";
      static constexpr std::array<const char*, 3> names{"Polyp", "Normal", "No-A"};
      for (std::size_t p = 0; p < 3; ++p) {
        m += std::string(names[p]) + "," + std::to_string(d.matrix[p][0]) + "," + std::to_string(d.matrix[p][1]) + "\n";
        cells.push_back({d.matrix[p][0], d.matrix[p][1]});
      }
      const std::string stem = file_stem(s, "detect");
      write_text(dir / "confusion" / (stem + ".csv"), m, written);
      write_png(render_matrix(cells), dir / "confusion" / (stem + ".png"));
      written.push_back(dir / "confusion" / (stem + ".png"));
      write_text(dir / "roc" / (stem + ".json"), json{{"points", roc_json(s.detection_roc)}}.dump(2) + "\n", written);
    }
    if (s.classification) {
      const auto& c = *s.classification;
      std::uint64_t n = c.matrix_total();
      json cj = c.to_json();
      json aurocs;
      json rocs;
      for (auto cls : kPolypClasses) {
        const auto& cs = c.per_class.at(cls);
        std::optional<double> pa;
        if (cs.counts.support() > 0 && cs.counts.tn + cs.counts.fp > 0) pa = point_auroc(cs.counts);
        const auto au = s.class_auroc.count(cls) ? s.class_auroc.at(cls) : std::nullopt;
        metrics += csv::escape(s.backend_id) + "," + s.template_id + ",classify," + std::string(class_code(cls)) + "," +
                   std::to_string(n) + "," + std::to_string(cs.counts.tp) + "," + std::to_string(cs.counts.fp) + "," +
                   std::to_string(cs.counts.tn) + "," + std::to_string(cs.counts.fn) + "," + fmt(precision(cs.counts)) + "," +
                   fmt(recall(cs.counts)) + "," + fmt(specificity(cs.counts)) + "," + fmt(cs.f1) + "," + fmt(pa) + "," +
                   fmt(au) + ",\n";
        aurocs[std::string(class_code(cls))] = {{"point_auroc", opt_json(pa)}, {"auroc", opt_json(au)}};
        rocs[std::string(class_code(cls))] = roc_json(s.class_roc.count(cls) ? s.class_roc.at(cls) : decltype(s.class_roc)::mapped_type{});
      }
      metrics += csv::escape(s.backend_id) + "," + s.template_id + ",classify,weighted," + std::to_string(n) +
                 ",,,,,,,,,,," + fmt(c.weighted_f1) + "\n";
      cj["auroc"] = aurocs;
      entry["classification"] = cj;

      std::string m = "predicted\\truth";
      for (auto cls : kAllClasses) m += "," + std::string(class_code(cls));
      m += "\n";
      std::vector<std::vector<std::uint64_t>> cells;
      for (std::size_t p = 0; p < kLabelCount; ++p) {
        m += std::string(label_name(static_cast<TaskLabel>(p)));
        std::vector<std::uint64_t> row;
        for (std::size_t t = 0; t < kClassCount; ++t) {
          m += "," + std::to_string(c.full_matrix[p][t]);
          row.push_back(c.full_matrix[p][t]);
        }
        m += "\n";
        cells.push_back(std::move(row));
      }
      const std::string stem = file_stem(s, "classify");
      write_text(dir / "confusion" / (stem + ".csv"), m, written);
      write_png(render_matrix(cells), dir / "confusion" / (stem + ".png"));
      written.push_back(dir / "confusion" / (stem + ".png"));
      write_text(dir / "roc" / (stem + ".json"), json{{"classes", rocs}}.dump(2) + "\n", written);
    }
    metrics_json.push_back(std::move(entry));
  }
  write_text(dir / "metrics.csv", metrics, written);
  write_text(dir / "metrics.json", metrics_json.dump(2) + "\n", written);

  std::string cmp = "backend,task,f1_simple,f1_engineered,change\n";
  for (const auto& c : bundle.comparisons) {
    cmp += csv::escape(c.backend_id) + "," + std::string(task_name(c.task)) + "," + fmt(c.f1_simple) + "," +
           fmt(c.f1_engineered) + "," + format_change(c.change_pct) + "\n";
  }
  write_text(dir / "prompt_comparison.csv", cmp, written);
  write_text(dir / "tilense_index.json", bundle.tilense_index.dump(2) + "\n", written);
  return written;
}

}  // namespace polypeval
