#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace polypeval::csv {

using Row = std::vector<std::string>;

struct Table {
  Row header;
  std::vector<Row> rows;
  /// 1-based line number in the source file for each row (header is line 1).
  std::vector<std::size_t> line_numbers;

  /// Index of a header column; throws ConfigError if absent.
  std::size_t column(std::string_view name) const;
};

/// RFC 4180 parsing: quoted fields, doubled quotes, embedded newlines.
/// Blank lines are skipped. An empty file yields an empty table.
Table parse(std::string_view text);
Table read_file(const std::filesystem::path& path);

std::string escape(std::string_view field);
void write_row(std::ostream& os, const Row& row);

}  // namespace polypeval::csv
