#include "cellprog/csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "cellprog/error.hpp"

namespace cellprog::csv {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      break;
    }
    out.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
  return out;
}

}  // namespace

std::size_t Table::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw Error(ErrorKind::Parse, fmt::format("missing CSV column '{}'", name));
}

std::optional<double> Table::maybe_number(std::size_t row, std::size_t col) const {
  try {
    return parse_double(rows.at(row).at(col));
  } catch (const Error& e) {
    throw Error(ErrorKind::Parse, fmt::format("{}: data row {}, column '{}': {}", path.string(),
                                              row + 1, header.at(col), e.what()));
  }
}

double Table::number(std::size_t row, std::size_t col) const {
  const auto v = maybe_number(row, col);
  if (!v) {
    throw Error(ErrorKind::Parse, fmt::format("{}: data row {}, column '{}' is empty",
                                              path.string(), row + 1, header.at(col)));
  }
  return *v;
}

std::optional<double> parse_double(std::string_view text) {
  text = trim(text);
  if (text.empty()) return std::nullopt;
  if (text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw Error(ErrorKind::Parse, fmt::format("not a number: '{}'", text));
  }
  return value;
}

Table read(const std::filesystem::path& path,
           const std::vector<std::string>& expected_header) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorKind::Io, fmt::format("cannot open '{}'", path.string()));
  }
  Table table;
  table.path = path;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = line;
    if (line_no == 1 && view.substr(0, 3) == "\xEF\xBB\xBF") view.remove_prefix(3);
    if (trim(view).empty()) continue;
    const auto fields = split(view);
    if (!have_header) {
      for (auto f : fields) table.header.emplace_back(f);
      if (!expected_header.empty() && table.header != expected_header) {
        std::string want;
        for (const auto& h : expected_header) want += (want.empty() ? "" : ",") + h;
        throw Error(ErrorKind::Parse,
                    fmt::format("{}: header must be '{}'", path.string(), want));
      }
      have_header = true;
      continue;
    }
    if (fields.size() != table.header.size()) {
      throw Error(ErrorKind::Parse,
                  fmt::format("{}:{}: expected {} fields, got {}", path.string(),
                              line_no, table.header.size(), fields.size()));
    }
    std::vector<std::string> row;
    row.reserve(fields.size());
    for (auto f : fields) row.emplace_back(f);
    table.rows.push_back(std::move(row));
  }
  if (!have_header) {
    throw Error(ErrorKind::Parse, fmt::format("{}: empty file", path.string()));
  }
  return table;
}

std::string format(double value) { return fmt::format("{}", value); }

std::string join(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += format(values[i]);
  }
  return out;
}

}  // namespace cellprog::csv
