#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "polypeval/labels.hpp"

namespace polypeval {

enum class SplitTag { Unassigned, Exp0, Main };

std::string_view split_name(SplitTag s);
std::optional<SplitTag> parse_split(std::string_view s);

struct ImageRecord {
  std::string id;
  std::filesystem::path file;
  bool presence = false;
  PathologyClass pathology = PathologyClass::Normal;
  int width = 0;
  int height = 0;
  SplitTag split = SplitTag::Unassigned;
};

struct DatasetManifest {
  std::vector<ImageRecord> records;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }
  const ImageRecord* find(std::string_view id) const;
  /// Records whose split tag matches; nullopt selects everything.
  DatasetManifest filtered(std::optional<SplitTag> split) const;
};

/// Reads a manifest CSV (`id,file,presence,class[,split]`). Relative file
/// paths resolve against the manifest's directory. Every referenced image
/// must exist and decode; its dimensions are recorded.
DatasetManifest load_manifest(const std::filesystem::path& path);

/// Writes the manifest including the split column. Paths are written
/// relative to the manifest directory where possible.
void write_manifest(const DatasetManifest& m, const std::filesystem::path& path);

/// Stratified (by presence) seeded split: round(fraction * N) records are
/// tagged exp0, the rest main. Both strata keep at least one record on each
/// side of the cut when they have two or more members.
DatasetManifest split_dataset(const DatasetManifest& m, double fraction, std::uint64_t seed);

/// Copies every image to `out_dir` under a seeded random 10-digit hex name
/// and writes the `old,new` mapping CSV to `mapping_path`. On failure every
/// file copied so far is removed and IoError is thrown.
DatasetManifest anonymize_filenames(const DatasetManifest& m, const std::filesystem::path& out_dir,
                                    const std::filesystem::path& mapping_path, std::uint64_t seed);

/// Count per class; all seven classes are present as keys.
std::map<PathologyClass, std::size_t> class_support(const DatasetManifest& m);

}  // namespace polypeval
