#include <doctest.h>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>

#include "polypeval/csv.hpp"
#include "polypeval/dataset.hpp"
#include "polypeval/errors.hpp"
#include "polypeval/labels.hpp"
#include "polypeval/rng.hpp"
#include "support.hpp"

using namespace polypeval;
using testsupport::TempDir;

namespace {

DatasetManifest synthetic(std::size_t polyps, std::size_t normals) {
  DatasetManifest m;
  for (std::size_t i = 0; i < polyps + normals; ++i) {
    ImageRecord r;
    r.id = "r" + std::to_string(i);
    r.presence = i < polyps;
    r.pathology = r.presence ? kPolypClasses[i % kPolypClasses.size()] : PathologyClass::Normal;
    m.records.push_back(r);
  }
  return m;
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace

TEST_SUITE("dataset") {

TEST_CASE("class codes are a bijection over seven members") {
  std::set<std::string_view> codes;
  for (auto c : kAllClasses) {
    codes.insert(class_code(c));
    CHECK(parse_class_code(class_code(c)) == c);
  }
  CHECK(codes.size() == 7);
  CHECK_FALSE(parse_class_code("XX").has_value());
  CHECK(legal_class_codes().find("TVA") != std::string::npos);
}

TEST_CASE("csv parser handles quotes, embedded newlines and line numbers") {
  const auto t = csv::parse("a,b\n\"x,1\",\"say \"\"hi\"\"\"\n\n\"multi\nline\",z\n");
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[0][0] == "x,1");
  CHECK(t.rows[0][1] == "say \"hi\"");
  CHECK(t.rows[1][0] == "multi\nline");
  CHECK(t.line_numbers[0] == 2);
  CHECK(t.line_numbers[1] == 4);
  CHECK(csv::escape("a,b") == "\"a,b\"");
  CHECK(csv::escape("plain") == "plain");
}

TEST_CASE("load_manifest maps presence and classes") {
  TempDir dir;
  for (int i = 0; i < 4; ++i) write_png(Image(8, 6, {10, 20, 30}), dir / ("i" + std::to_string(i) + ".png"));
  write_text(dir / "m.csv", "id,file,presence,class\na,i0.png,1,TA\nb,i1.png,0,Normal\nc,i2.png,1,HP\nd,i3.png,0,Normal\n");
  const auto m = load_manifest(dir / "m.csv");
  REQUIRE(m.size() == 4);
  CHECK(std::count_if(m.records.begin(), m.records.end(), [](const ImageRecord& r) { return r.presence; }) == 2);
  CHECK(m.records[0].pathology == PathologyClass::TA);
  CHECK(m.records[0].width == 8);
  CHECK(m.records[0].height == 6);
  CHECK(m.find("c")->pathology == PathologyClass::HP);
}

TEST_CASE("load_manifest rejects bad rows with the row number") {
  TempDir dir;
  write_png(Image(4, 4), dir / "a.png");
  write_png(Image(4, 4), dir / "b.png");

  write_text(dir / "bad_class.csv", "id,file,presence,class\na,a.png,1,TA\nb,b.png,1,XX\n");
  try {
    load_manifest(dir / "bad_class.csv");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("row 3") != std::string::npos);
    for (auto c : kAllClasses) CHECK(msg.find(std::string(class_code(c))) != std::string::npos);
  }

  write_text(dir / "dup.csv", "id,file,presence,class\na,a.png,1,TA\na,b.png,0,Normal\n");
  CHECK_THROWS_AS(load_manifest(dir / "dup.csv"), ConfigError);

  write_text(dir / "inconsistent.csv", "id,file,presence,class\na,a.png,0,TA\n");
  CHECK_THROWS_AS(load_manifest(dir / "inconsistent.csv"), ConfigError);

  write_text(dir / "missing.csv", "id,file,presence,class\na,nothere.png,1,TA\n");
  CHECK_THROWS(load_manifest(dir / "missing.csv"));

  CHECK_THROWS_AS(load_manifest(dir / "absent.csv"), ConfigError);
}

TEST_CASE("empty manifest file is valid and empty") {
  TempDir dir;
  write_text(dir / "empty.csv", "");
  CHECK(load_manifest(dir / "empty.csv").empty());
  write_text(dir / "header.csv", "id,file,presence,class\n");
  CHECK(load_manifest(dir / "header.csv").empty());
}

TEST_CASE("manifest round-trips through write_manifest with split tags") {
  TempDir dir;
  const auto path = testsupport::write_manifest(dir.path, 6);
  auto m = split_dataset(load_manifest(path), 0.5, 3);
  write_manifest(m, dir / "copy.csv");
  const auto back = load_manifest(dir / "copy.csv");
  REQUIRE(back.size() == m.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    CHECK(back.records[i].id == m.records[i].id);
    CHECK(back.records[i].split == m.records[i].split);
    CHECK(std::filesystem::equivalent(back.records[i].file, m.records[i].file));
  }
  CHECK(back.filtered(SplitTag::Exp0).size() == 3);
}

TEST_CASE("split_dataset counts and determinism") {
  const auto m = synthetic(50, 50);
  const auto a = split_dataset(m, 0.15, 7);
  const auto b = split_dataset(m, 0.15, 7);
  CHECK(a.filtered(SplitTag::Exp0).size() == 15);
  CHECK(a.filtered(SplitTag::Main).size() == 85);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.records[i].split == b.records[i].split);
  const auto c = split_dataset(m, 0.15, 8);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) differs = differs || a.records[i].split != c.records[i].split;
  CHECK(differs);

  CHECK_THROWS_AS(split_dataset(m, 0.0, 1), ConfigError);
  CHECK_THROWS_AS(split_dataset(m, 1.0, 1), ConfigError);
  CHECK_THROWS_AS(split_dataset(DatasetManifest{}, 0.5, 1), ConfigError);
}

TEST_CASE("split_dataset on 10 polyp / 10 normal matches the frozen assignment") {
  const auto m = split_dataset(synthetic(10, 10), 0.15, 123);
  std::vector<std::string> exp0;
  for (const auto& r : m.records) {
    if (r.split == SplitTag::Exp0) exp0.push_back(r.id);
  }
  // Frozen from one run; the generator is platform-independent.
  CHECK(exp0 == std::vector<std::string>{"r2", "r9", "r13"});
  const auto e = m.filtered(SplitTag::Exp0);
  CHECK(std::any_of(e.records.begin(), e.records.end(), [](const ImageRecord& r) { return r.presence; }));
  CHECK(std::any_of(e.records.begin(), e.records.end(), [](const ImageRecord& r) { return !r.presence; }));
}

TEST_CASE("split keeps both presence values in exp0 across seeds") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto m = split_dataset(synthetic(2 + seed % 5, 2 + seed % 7), 0.15, seed);
    const auto e = m.filtered(SplitTag::Exp0);
    const auto polyps = std::count_if(e.records.begin(), e.records.end(), [](const ImageRecord& r) { return r.presence; });
    CHECK(polyps >= 1);
    CHECK(static_cast<std::size_t>(polyps) < e.size());
  }
}

TEST_CASE("anonymize_filenames renames, maps and leaks nothing") {
  TempDir dir;
  std::filesystem::create_directories(dir / "src");
  DatasetManifest m;
  const char* names[] = {"TA_polyp_017.png", "HP_polyp_003.png", "Normal_011.png", "ac_case.JPG"};
  const PathologyClass classes[] = {PathologyClass::TA, PathologyClass::HP, PathologyClass::Normal, PathologyClass::AC};
  for (int i = 0; i < 4; ++i) {
    const auto p = dir / "src" / names[i];
    write_png(Image(4, 4, {static_cast<std::uint8_t>(i), 0, 0}), p);
    m.records.push_back({std::string("id") + std::to_string(i), p, classes[i] != PathologyClass::Normal, classes[i], 4, 4,
                         SplitTag::Unassigned});
  }
  const auto out = anonymize_filenames(m, dir / "anon", dir / "mapping.csv", 42);
  const auto again = anonymize_filenames(m, dir / "anon2", dir / "mapping2.csv", 42);
  std::set<std::string> seen;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::string name = out.records[i].file.filename().string();
    const std::string stem = out.records[i].file.stem().string();
    CHECK(stem.size() == 10);
    CHECK(std::all_of(stem.begin(), stem.end(), [](char c) { return std::isxdigit(static_cast<unsigned char>(c)); }));
    CHECK(seen.insert(name).second);
    CHECK(std::filesystem::exists(out.records[i].file));
    CHECK(name == again.records[i].file.filename().string());
    const std::string original = lower(std::filesystem::path(names[i]).stem().string());
    CHECK(lower(name).find(original) == std::string::npos);
    for (auto c : kAllClasses) CHECK(lower(name).find(lower(std::string(class_code(c)))) == std::string::npos);
  }
  CHECK(out.records[3].file.extension() == ".jpg");
  const auto mapping = csv::read_file(dir / "mapping.csv");
  REQUIRE(mapping.rows.size() == 4);
  CHECK(mapping.header == csv::Row{"old", "new"});
  CHECK(mapping.rows[0][0].find("TA_polyp_017.png") != std::string::npos);
}

TEST_CASE("anonymize_filenames fails atomically when the target is unwritable") {
  TempDir dir;
  write_png(Image(4, 4), dir / "a.png");
  DatasetManifest m;
  m.records.push_back({"a", dir / "a.png", true, PathologyClass::TA, 4, 4, SplitTag::Unassigned});
  // A regular file where the output directory should be: unwritable even as root.
  write_text(dir / "blocker", "x");
  CHECK_THROWS_AS(anonymize_filenames(m, dir / "blocker" / "out", dir / "map.csv", 1), IoError);
  CHECK_FALSE(std::filesystem::exists(dir / "map.csv"));
}

TEST_CASE("class_support counts every class") {
  DatasetManifest m;
  for (auto c : {PathologyClass::TA, PathologyClass::TA, PathologyClass::HP, PathologyClass::Normal}) {
    m.records.push_back({"x" + std::to_string(m.size()), {}, c != PathologyClass::Normal, c, 0, 0, SplitTag::Unassigned});
  }
  const auto s = class_support(m);
  CHECK(s.size() == 7);
  CHECK(s.at(PathologyClass::TA) == 2);
  CHECK(s.at(PathologyClass::HP) == 1);
  CHECK(s.at(PathologyClass::Normal) == 1);
  CHECK(s.at(PathologyClass::AC) == 0);
  for (const auto& [c, n] : class_support(DatasetManifest{})) CHECK(n == 0);
}

TEST_CASE("class_support of a full-size polyp manifest totals 214") {
  const std::map<PathologyClass, int> supports = {{PathologyClass::AC, 17}, {PathologyClass::TA, 144}, {PathologyClass::TVA, 12},
                                                  {PathologyClass::VA, 7},  {PathologyClass::HP, 25},  {PathologyClass::IP, 9}};
  DatasetManifest m;
  for (const auto& [c, n] : supports) {
    for (int i = 0; i < n; ++i) m.records.push_back({"s" + std::to_string(m.size()), {}, true, c, 0, 0, SplitTag::Unassigned});
  }
  std::size_t total = 0;
  for (const auto& [c, n] : class_support(m)) total += n;
  CHECK(total == 214);
}

TEST_CASE("class_support totals equal manifest size on random manifests") {
  PortableRng rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    DatasetManifest m;
    const auto n = rng.below(40);
    for (std::uint64_t i = 0; i < n; ++i) {
      const auto c = kAllClasses[rng.below(7)];
      m.records.push_back({"q" + std::to_string(i), {}, c != PathologyClass::Normal, c, 0, 0, SplitTag::Unassigned});
    }
    std::size_t total = 0;
    for (const auto& [c, k] : class_support(m)) total += k;
    CHECK(total == m.size());
  }
}

}  // TEST_SUITE
