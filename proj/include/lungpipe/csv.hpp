#pragma once

#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace lungpipe {

/// Comma-separated table with a header row. Fields may be double-quoted.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> row_lines;  // 1-based source line per row

  /// Column position; throws ParseError naming the missing column.
  std::size_t column(std::string_view name) const;
  bool has_column(std::string_view name) const;
};

/// Throws ParseError on an empty document or a ragged row.
CsvTable read_csv(std::istream& in);

/// Parse a numeric field, throwing ParseError with line context.
double csv_number(const std::string& field, std::size_t line, std::string_view column);

std::string csv_escape(std::string_view field);
void write_csv_row(std::ostream& out, const std::vector<std::string>& fields);

}  // namespace lungpipe
