#pragma once

#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace cyclecount::csv {

struct Row {
  std::size_t line = 0;  // 1-based physical line of the row start
  std::vector<std::string> fields;
};

struct Table {
  std::vector<std::string> header;
  std::vector<Row> rows;

  // -1 when absent.
  int column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    return -1;
  }
};

// Minimal RFC 4180 reader: quoted fields may contain the delimiter, doubled
// quotes and newlines. Blank lines are skipped. A UTF-8 BOM is dropped.
inline Table read(std::istream& in, char delim = ',') {
  Table table;
  std::string field;
  std::vector<std::string> fields;
  bool in_quotes = false;
  bool any = false;
  std::size_t line = 1, row_line = 1;
  bool first = true;

  auto finish_row = [&] {
    fields.push_back(std::move(field));
    field.clear();
    const bool blank = fields.size() == 1 && fields[0].empty() && !any;
    if (!blank) {
      if (table.header.empty() && first) {
        table.header = std::move(fields);
        first = false;
      } else {
        table.rows.push_back({row_line, std::move(fields)});
      }
    }
    fields.clear();
    any = false;
  };

  char c;
  bool at_start = true;
  while (in.get(c)) {
    if (at_start) {
      at_start = false;
      if (static_cast<unsigned char>(c) == 0xEF) {
        char b1, b2;
        if (in.get(b1) && in.get(b2) && static_cast<unsigned char>(b1) == 0xBB &&
            static_cast<unsigned char>(b2) == 0xBF)
          continue;
        field.push_back(c);
        field.push_back(b1);
        field.push_back(b2);
        continue;
      }
    }
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field.push_back('"');
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    if (c == '"' && field.empty()) {
      in_quotes = true;
      any = true;
    } else if (c == delim) {
      fields.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n') {
      finish_row();
      ++line;
      row_line = line;
    } else if (c != '\r') {
      field.push_back(c);
      any = true;
    }
  }
  if (any || !field.empty() || !fields.empty()) finish_row();
  return table;
}

inline std::string escape(std::string_view v, char delim = ',') {
  if (v.find_first_of(std::string{delim} + "\"\n\r") == std::string_view::npos) return std::string(v);
  std::string out = "\"";
  for (char c : v) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline void write_row(std::ostream& out, const std::vector<std::string>& fields, char delim = ',') {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out << delim;
    out << escape(fields[i], delim);
  }
  out << '\n';
}

}  // namespace cyclecount::csv
