#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "metauad/csv.hpp"

namespace metauad {

struct ForestConfig {
  int n_trees = 100;
  int max_depth = 12;
  int min_split = 5;
  double feature_subsample = 0.0;  // fraction of features tried per split; 0 means sqrt(d)/d
  std::uint64_t seed = 0;

  void validate() const;
};

struct SelectionConfig {
  double missing_threshold = 0.5;
  double bottom_fraction = 0.3;
  ForestConfig forest;
};

enum class RemovalRule { missing, zero_entropy, low_importance };

const char* removal_rule_name(RemovalRule rule);

struct Removal {
  std::string feature_id;
  RemovalRule rule;
  double statistic;  // missing ratio, entropy, or importance per the rule
};

struct SelectionReport {
  std::vector<std::string> retained_ids;  // input column order
  std::vector<Removal> removed;
  // importance per feature surviving the first two rules, input column order
  std::vector<std::pair<std::string, double>> importances;
};

// Per-column statistics captured at selection time so later stages can
// impute and standardize new data identically.
struct Preprocessing {
  std::vector<std::string> feature_ids;
  std::vector<double> medians;
  std::vector<double> means;
  std::vector<double> stds;

  // Impute missing entries with the stored median, then z-score with the
  // stored mean/std. Columns with zero spread pass through unscaled.
  Eigen::VectorXd apply(const std::vector<double>& row) const;

  nlohmann::json to_json() const;
  static Preprocessing from_json(const nlohmann::json& j);
};

double missing_ratio(const std::vector<double>& column);

// Shannon entropy in bits over the distinct non-missing values.
double entropy_bits(const std::vector<double>& column);

// Normalized mean-decrease-in-impurity importance from a random forest of
// CART trees. Entries sum to 1 (all-zero if no split ever reduced impurity)
// and are deterministic for a given seed regardless of row order or thread
// scheduling. The table must be labeled and already imputed.
std::vector<std::pair<std::string, double>> rf_importance(const CsvTable& table,
                                                          const ForestConfig& config);

SelectionReport select_features(const CsvTable& table, const SelectionConfig& config);

// Median/mean/std for the retained columns of the table the report came from.
Preprocessing selection_preprocessing(const CsvTable& table, const SelectionReport& report);

nlohmann::json selection_manifest(const SelectionReport& report, const SelectionConfig& config,
                                  const Preprocessing& prep, const std::string& source_hash);

}  // namespace metauad
