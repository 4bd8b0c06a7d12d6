#include "faircal/csv.hpp"

#include "faircal/core.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <iterator>
#include <ostream>

namespace faircal::csv {

int Table::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) {
      return static_cast<int>(i);
    }
  }
  return -1;
}

Table read(std::istream& in) {
  const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  std::size_t pos = 0;
  if (text.size() >= 3 && text.compare(0, 3, "\xEF\xBB\xBF") == 0) {
    pos = 3;
  }

  std::vector<Row> records;
  Row record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;

  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    // A blank line yields a single empty field; skip it.
    if (!(record.size() == 1 && record[0].empty())) {
      records.push_back(std::move(record));
    }
    record.clear();
  };

  for (; pos < text.size(); ++pos) {
    const char c = text[pos];
    if (in_quotes) {
      if (c == '"') {
        if (pos + 1 < text.size() && text[pos + 1] == '"') {
          field.push_back('"');
          ++pos;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (field_started && !field.empty()) {
          throw Error("csv: stray quote inside unquoted field at record " + std::to_string(records.size() + 1));
        }
        in_quotes = true;
        field_started = true;
        break;
      case ',':
        end_field();
        break;
      case '\r':
        if (pos + 1 < text.size() && text[pos + 1] == '\n') {
          ++pos;
        }
        end_record();
        break;
      case '\n':
        end_record();
        break;
      default:
        field.push_back(c);
        field_started = true;
    }
  }
  if (in_quotes) {
    throw Error("csv: unterminated quoted field");
  }
  if (field_started || !field.empty() || !record.empty()) {
    end_record();
  }

  Table table;
  if (records.empty()) {
    return table;
  }
  table.header = std::move(records.front());
  table.rows.assign(std::make_move_iterator(records.begin() + 1), std::make_move_iterator(records.end()));
  return table;
}

Table read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error("csv: cannot open " + path);
  }
  return read(in);
}

std::string escape(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) {
    return field;
  }
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') {
      out.push_back('"');
    }
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

void write_row(std::ostream& out, const Row& row) {
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i > 0) {
      out << ',';
    }
    out << escape(row[i]);
  }
  out << '\n';
}

std::string format_double(double value) {
  char buf[64];
  const auto result = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, result.ptr);
}

bool parse_double(const std::string& cell, double& out) {
  std::size_t begin = 0;
  std::size_t end = cell.size();
  while (begin < end && (cell[begin] == ' ' || cell[begin] == '\t')) ++begin;
  while (end > begin && (cell[end - 1] == ' ' || cell[end - 1] == '\t')) --end;
  if (begin == end) {
    return false;
  }
  const char* first = cell.data() + begin;
  if (*first == '+') {
    ++first;
  }
  const auto result = std::from_chars(first, cell.data() + end, out);
  return result.ec == std::errc() && result.ptr == cell.data() + end;
}

}  // namespace faircal::csv
