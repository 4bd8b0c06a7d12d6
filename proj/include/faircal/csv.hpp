#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace faircal::csv {

using Row = std::vector<std::string>;

struct Table {
  Row header;
  std::vector<Row> rows;

  /// Column position by name, or -1.
  int column(const std::string& name) const;
};

/// RFC-4180 reader: quoted fields, escaped quotes, embedded separators and line breaks,
/// CRLF or LF line endings, optional UTF-8 BOM.
Table read(std::istream& in);
Table read_file(const std::string& path);

/// Quotes a field only when it contains a separator, quote, or line break.
std::string escape(const std::string& field);
void write_row(std::ostream& out, const Row& row);

/// Shortest round-trip decimal representation of a double.
std::string format_double(double value);

/// Strict numeric parse of a full cell. Returns false on trailing garbage or empty input.
bool parse_double(const std::string& cell, double& out);

}  // namespace faircal::csv
