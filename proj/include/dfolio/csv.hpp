#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace dfolio::csv {

/// A parsed comma-separated file. No quoting support: the formats written by
/// this project never contain commas inside fields.
struct Table {
  std::filesystem::path source;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  ///< 1-based source line of each row

  /// Column index by name; throws IngestError when absent.
  std::size_t column(std::string_view name) const;
};

/// Reads a file; blank lines are skipped, CR line endings tolerated.
/// Rows whose field count differs from the header raise IngestError.
Table read(const std::filesystem::path& path);

std::vector<std::string> split(std::string_view line, char sep = ',');

/// Shortest decimal representation that round-trips to the same double.
std::string format_double(double v);

/// Strict full-string double parse; throws std::invalid_argument.
double parse_double(std::string_view s);

std::string join(const std::vector<std::string>& fields, char sep = ',');

}  // namespace dfolio::csv
