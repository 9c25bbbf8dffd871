#include "metauad/csv.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "metauad/common.hpp"

namespace metauad {

bool is_missing_token(const std::string& token) {
  std::string t = to_lower(trim(token));
  return t.empty() || t == "nan" || t == "infinity" || t == "-infinity";
}

double parse_cell(const std::string& token) {
  if (is_missing_token(token)) return std::numeric_limits<double>::quiet_NaN();
  const std::string t = trim(token);
  char* end = nullptr;
  double v = std::strtod(t.c_str(), &end);
  if (end == t.c_str() || *end != '\0') throw FormatError("bad numeric cell: '" + token + "'");
  return v;
}

std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

CsvTable read_csv(const std::string& path, const std::string& label_col) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open file: " + path);

  CsvTable table;
  std::string line;
  if (!std::getline(f, line)) throw FormatError("empty CSV: " + path);

  auto header = split_csv_line(line);
  std::ptrdiff_t label_idx = -1;
  for (std::size_t i = 0; i < header.size(); ++i) {
    std::string name = trim(header[i]);
    if (label_idx < 0 && iequals(name, label_col)) {
      label_idx = static_cast<std::ptrdiff_t>(i);
    } else {
      table.feature_ids.push_back(name);
    }
  }
  table.has_labels = label_idx >= 0;

  std::size_t line_no = 1;
  while (std::getline(f, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw FormatError(path + ": line " + std::to_string(line_no) + " has " +
                        std::to_string(cells.size()) + " cells, expected " +
                        std::to_string(header.size()));
    }
    std::vector<double> row;
    row.reserve(table.feature_ids.size());
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (static_cast<std::ptrdiff_t>(i) == label_idx) {
        table.labels.push_back(trim(cells[i]));
      } else {
        row.push_back(parse_cell(cells[i]));
      }
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

void write_csv(const std::string& path, const std::vector<std::string>& feature_ids,
               const std::vector<std::vector<double>>& rows,
               const std::vector<std::string>* labels) {
  if (labels != nullptr && labels->size() != rows.size()) {
    throw PreconditionError("label count does not match row count");
  }
  std::ostringstream out;
  for (std::size_t i = 0; i < feature_ids.size(); ++i) {
    if (i > 0) out << ',';
    out << feature_ids[i];
  }
  if (labels != nullptr) out << ",label";
  out << '\n';
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != feature_ids.size()) {
      throw PreconditionError("row " + std::to_string(r) + " width mismatch");
    }
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i > 0) out << ',';
      if (std::isnan(row[i])) {
        // missing
      } else {
        out << format_real(row[i]);
      }
    }
    if (labels != nullptr) out << ',' << (*labels)[r];
    out << '\n';
  }
  write_text_file(path, out.str());
}

}  // namespace metauad
