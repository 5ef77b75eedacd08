#include "polypeval/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <system_error>

#include "polypeval/csv.hpp"
#include "polypeval/errors.hpp"
#include "polypeval/hash.hpp"
#include "polypeval/image.hpp"
#include "polypeval/rng.hpp"

namespace fs = std::filesystem;

namespace polypeval {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

bool leaks(const std::string& candidate, const std::string& stem_lower) {
  if (!stem_lower.empty() && candidate.find(stem_lower) != std::string::npos) return true;
  for (auto c : kAllClasses) {
    if (candidate.find(lower(class_code(c))) != std::string::npos) return true;
  }
  return false;
}

}  // namespace

std::string_view split_name(SplitTag s) {
  switch (s) {
    case SplitTag::Exp0: return "exp0";
    case SplitTag::Main: return "main";
    case SplitTag::Unassigned: return "unassigned";
  }
  return "unassigned";
}

std::optional<SplitTag> parse_split(std::string_view s) {
  if (s == "exp0") return SplitTag::Exp0;
  if (s == "main") return SplitTag::Main;
  if (s == "unassigned" || s.empty()) return SplitTag::Unassigned;
  return std::nullopt;
}

const ImageRecord* DatasetManifest::find(std::string_view id) const {
  for (const auto& r : records) {
    if (r.id == id) return &r;
  }
  return nullptr;
}

DatasetManifest DatasetManifest::filtered(std::optional<SplitTag> split) const {
  if (!split) return *this;
  DatasetManifest out;
  std::copy_if(records.begin(), records.end(), std::back_inserter(out.records),
               [&](const ImageRecord& r) { return r.split == *split; });
  return out;
}

DatasetManifest load_manifest(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("manifest not found: " + path.string());
  const csv::Table table = csv::read_file(path);
  DatasetManifest m;
  if (table.header.empty()) return m;

  const auto id_col = table.column("id");
  const auto file_col = table.column("file");
  const auto presence_col = table.column("presence");
  const auto class_col = table.column("class");
  std::optional<std::size_t> split_col;
  if (std::find(table.header.begin(), table.header.end(), "split") != table.header.end()) {
    split_col = table.column("split");
  }

  const fs::path base = path.parent_path();
  std::set<std::string> seen;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    const std::string where = path.string() + " row " + std::to_string(table.line_numbers[i]);
    if (row.size() < table.header.size()) throw ConfigError(where + ": expected " + std::to_string(table.header.size()) + " fields");

    ImageRecord rec;
    rec.id = trim(row[id_col]);
    if (rec.id.empty()) throw ConfigError(where + ": empty id");
    if (!seen.insert(rec.id).second) throw ConfigError(where + ": duplicate id '" + rec.id + "'");

    const std::string presence = trim(row[presence_col]);
    if (presence != "0" && presence != "1") throw ConfigError(where + ": presence must be 0 or 1, got '" + presence + "'");
    rec.presence = presence == "1";

    const std::string code = trim(row[class_col]);
    auto cls = parse_class_code(code);
    if (!cls) throw ConfigError(where + ": unknown class '" + code + "' (legal: " + legal_class_codes() + ")");
    rec.pathology = *cls;
    if (rec.presence != (rec.pathology != PathologyClass::Normal)) {
      throw ConfigError(where + ": presence=" + presence + " contradicts class " + code);
    }

    if (split_col) {
      auto tag = parse_split(trim(row[*split_col]));
      if (!tag) throw ConfigError(where + ": unknown split tag '" + row[*split_col] + "'");
      rec.split = *tag;
    }

    fs::path file = trim(row[file_col]);
    if (file.is_relative()) file = base / file;
    if (!fs::exists(file)) throw ConfigError(where + ": image file not found: " + file.string());
    rec.file = file.lexically_normal();
    try {
      const Image img = read_image(rec.file);
      rec.width = img.width;
      rec.height = img.height;
    } catch (const IoError& e) {
      throw ConfigError(where + ": " + e.what());
    }
    m.records.push_back(std::move(rec));
  }
  return m;
}

void write_manifest(const DatasetManifest& m, const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + path.string());
  const fs::path base = fs::absolute(path).parent_path();
  csv::write_row(out, {"id", "file", "presence", "class", "split"});
  for (const auto& r : m.records) {
    fs::path file = fs::absolute(r.file).lexically_normal();
    fs::path rel = file.lexically_relative(base);
    const bool inside = !rel.empty() && *rel.begin() != "..";
    csv::write_row(out, {r.id, (inside ? rel : file).generic_string(), r.presence ? "1" : "0",
                         std::string(class_code(r.pathology)), std::string(split_name(r.split))});
  }
  if (!out) throw IoError("write failed for " + path.string());
}

DatasetManifest split_dataset(const DatasetManifest& m, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("split fraction must lie in (0,1), got " + std::to_string(fraction));
  if (m.empty()) throw ConfigError("cannot split an empty manifest");

  // Stratum 0 = polyp present, stratum 1 = normal.
  std::array<std::vector<std::size_t>, 2> strata;
  for (std::size_t i = 0; i < m.records.size(); ++i) strata[m.records[i].presence ? 0 : 1].push_back(i);

  const auto n = static_cast<double>(m.records.size());
  const auto target = static_cast<std::size_t>(std::llround(fraction * n));

  // Largest-remainder apportionment of the target across strata.
  std::array<std::size_t, 2> quota{};
  std::array<double, 2> remainder{};
  std::size_t assigned = 0;
  for (std::size_t s = 0; s < 2; ++s) {
    const double exact = fraction * static_cast<double>(strata[s].size());
    quota[s] = static_cast<std::size_t>(std::floor(exact));
    remainder[s] = exact - std::floor(exact);
    assigned += quota[s];
  }
  std::array<std::size_t, 2> order{0, 1};
  if (remainder[1] > remainder[0]) std::swap(order[0], order[1]);
  for (std::size_t s : order) {
    if (assigned >= target) break;
    if (quota[s] < strata[s].size()) {
      ++quota[s];
      ++assigned;
    }
  }
  for (std::size_t s = 0; s < 2; ++s) {
    const std::size_t size = strata[s].size();
    if (size >= 2) quota[s] = std::clamp<std::size_t>(quota[s], 1, size - 1);
  }

  DatasetManifest out = m;
  PortableRng rng(seed);
  for (std::size_t s = 0; s < 2; ++s) {
    auto& idx = strata[s];
    rng.shuffle(std::span<std::size_t>(idx));
    for (std::size_t k = 0; k < idx.size(); ++k) {
      out.records[idx[k]].split = k < quota[s] ? SplitTag::Exp0 : SplitTag::Main;
    }
  }
  return out;
}

DatasetManifest anonymize_filenames(const DatasetManifest& m, const fs::path& out_dir, const fs::path& mapping_path,
                                    std::uint64_t seed) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) throw IoError("cannot create output directory " + out_dir.string());

  DatasetManifest out = m;
  std::vector<fs::path> written;
  std::set<std::string> used;
  PortableRng rng(seed);

  auto rollback = [&] {
    for (const auto& p : written) fs::remove(p, ec);
  };

  try {
    for (auto& rec : out.records) {
      const std::string stem = lower(rec.file.stem().string());
      std::string name;
      int collisions = 0;
      for (;;) {
        // Names that happen to contain the stem or a class code are redrawn;
        // that is not a collision.
        int redraws = 0;
        do {
          std::array<std::uint8_t, 5> bytes{};
          for (auto& b : bytes) b = static_cast<std::uint8_t>(rng.below(256));
          name = to_hex(bytes);
          if (++redraws > 10000) throw IoError("cannot find a non-leaking name for " + rec.file.string());
        } while (leaks(name, stem));
        if (used.insert(name).second) break;
        if (++collisions > 5) throw IoError("filename collision persisted after 5 retries for " + rec.file.string());
      }
      const fs::path target = out_dir / (name + lower(rec.file.extension().string()));
      fs::copy_file(rec.file, target, fs::copy_options::overwrite_existing, ec);
      if (ec) throw IoError("copy " + rec.file.string() + " -> " + target.string() + " failed: " + ec.message());
      written.push_back(target);
      rec.file = target;
    }

    std::ofstream map(mapping_path, std::ios::binary | std::ios::trunc);
    if (!map) throw IoError("cannot write mapping file " + mapping_path.string());
    written.push_back(mapping_path);
    csv::write_row(map, {"old", "new"});
    for (std::size_t i = 0; i < m.records.size(); ++i) {
      csv::write_row(map, {m.records[i].file.string(), out.records[i].file.string()});
    }
    if (!map) throw IoError("write failed for mapping file " + mapping_path.string());
  } catch (...) {
    rollback();
    throw;
  }
  return out;
}

std::map<PathologyClass, std::size_t> class_support(const DatasetManifest& m) {
  std::map<PathologyClass, std::size_t> counts;
  for (auto c : kAllClasses) counts[c] = 0;
  for (const auto& r : m.records) ++counts[r.pathology];
  return counts;
}

}  // namespace polypeval
