#include "dfolio/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "dfolio/errors.hpp"

namespace dfolio::csv {

std::size_t Table::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw IngestError(source.string() + ": missing column '" + std::string(name) + "'");
}

std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(line.substr(start));
      break;
    }
    out.emplace_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

Table read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IngestError(path.string() + ": cannot open file");
  }
  Table t;
  t.source = path;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split(line);
    if (!have_header) {
      t.header = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != t.header.size()) {
      throw IngestError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                        std::to_string(t.header.size()) + " fields, got " +
                        std::to_string(fields.size()));
    }
    t.rows.push_back(std::move(fields));
    t.line_numbers.push_back(lineno);
  }
  if (!have_header) {
    throw IngestError(path.string() + ": empty file (no header)");
  }
  return t;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw std::runtime_error("format_double failed");
  return std::string(buf, ptr);
}

double parse_double(std::string_view s) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last || first == last) {
    throw std::invalid_argument("not a number: '" + std::string(s) + "'");
  }
  return v;
}

std::string join(const std::vector<std::string>& fields, char sep) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += sep;
    out += fields[i];
  }
  return out;
}

}  // namespace dfolio::csv
