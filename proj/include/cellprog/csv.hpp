#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cellprog::csv {

/// A table read from a CSV file; cells are kept as trimmed text.
struct Table {
  std::filesystem::path path;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const;
  /// Numeric cell; empty cells are std::nullopt. Errors name file and row.
  std::optional<double> maybe_number(std::size_t row, std::size_t col) const;
  /// Numeric cell that must be present.
  double number(std::size_t row, std::size_t col) const;
};

/// Reads a CSV and checks that the header equals `expected_header`
/// exactly (when non-empty). Errors carry the path and line number.
Table read(const std::filesystem::path& path,
           const std::vector<std::string>& expected_header = {});

/// Parses a finite or non-finite double; rejects trailing garbage.
std::optional<double> parse_double(std::string_view text);

/// Shortest round-trip representation of a double.
std::string format(double value);

/// Joins values with commas using format().
std::string join(const std::vector<double>& values);

}  // namespace cellprog::csv
