#pragma once

#include <optional>
#include <string>
#include <vector>

namespace metauad {

// CSV table with optional label column. Missing numeric cells are NaN;
// the sentinels "", "NaN", "Infinity" and "-Infinity" (case-insensitive)
// all read as missing, matching the dataset CSV conventions this loader
// has to ingest.
struct CsvTable {
  std::vector<std::string> feature_ids;       // header minus the label column
  std::vector<std::vector<double>> rows;      // NaN = missing
  std::vector<std::string> labels;            // empty when no label column
  bool has_labels = false;
};

bool is_missing_token(const std::string& token);
double parse_cell(const std::string& token);  // missing -> NaN, bad token -> FormatError

// 9 significant digits; integral values print without a decimal point.
std::string format_real(double v);

CsvTable read_csv(const std::string& path, const std::string& label_col = "label");

void write_csv(const std::string& path, const std::vector<std::string>& feature_ids,
               const std::vector<std::vector<double>>& rows,
               const std::vector<std::string>* labels);

// Raw cell split for one line, honoring double quotes.
std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace metauad
