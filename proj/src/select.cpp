#include "metauad/select.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>

#include "metauad/common.hpp"

namespace metauad {

void ForestConfig::validate() const {
  if (n_trees <= 0) throw PreconditionError("forest n_trees must be positive");
  if (max_depth <= 0) throw PreconditionError("forest max_depth must be positive");
  if (min_split <= 0) throw PreconditionError("forest min_split must be positive");
  if (feature_subsample < 0.0 || feature_subsample > 1.0) {
    throw PreconditionError("feature_subsample must lie in [0,1] (0 selects sqrt(d)/d)");
  }
}

const char* removal_rule_name(RemovalRule rule) {
  switch (rule) {
    case RemovalRule::missing: return "missing";
    case RemovalRule::zero_entropy: return "zero_entropy";
    case RemovalRule::low_importance: return "low_importance";
  }
  return "?";
}

double missing_ratio(const std::vector<double>& column) {
  if (column.empty()) throw PreconditionError("missing_ratio of an empty column");
  std::size_t miss = 0;
  for (double v : column) {
    if (std::isnan(v)) ++miss;
  }
  return static_cast<double>(miss) / static_cast<double>(column.size());
}

double entropy_bits(const std::vector<double>& column) {
  std::map<double, std::size_t> counts;
  for (double v : column) {
    if (!std::isnan(v)) ++counts[v];
  }
  if (counts.empty()) throw PreconditionError("entropy of an all-missing column");
  std::size_t total = 0;
  for (const auto& [v, c] : counts) total += c;
  double h = 0;
  for (const auto& [v, c] : counts) {
    double p = static_cast<double>(c) / static_cast<double>(total);
    h -= p * std::log2(p);
  }
  return std::max(h, 0.0);
}

namespace {

double gini(const std::vector<std::size_t>& counts, std::size_t total) {
  double g = 1.0;
  for (std::size_t c : counts) {
    double p = static_cast<double>(c) / static_cast<double>(total);
    g -= p * p;
  }
  return g;
}

struct TreeInput {
  const std::vector<std::vector<double>>& rows;
  const std::vector<int>& labels;
  int n_features;
  int n_classes;
  std::size_t n_total;  // bootstrap sample size, for node-weight normalization
};

struct NodeSplit {
  bool found = false;
  int feature = -1;
  double threshold = 0;
  double decrease = 0;  // weighted impurity decrease, node fraction included
};

// Best axis-aligned split over the candidate features, ties resolved toward
// the lower feature index and then the lower threshold by iteration order.
NodeSplit best_split(const TreeInput& in, const std::vector<std::size_t>& node,
                     const std::vector<int>& candidates, double node_gini) {
  NodeSplit best;
  const std::size_t n = node.size();
  std::vector<std::pair<double, int>> order(n);
  std::vector<std::size_t> left_counts(static_cast<std::size_t>(in.n_classes));
  std::vector<std::size_t> total_counts(static_cast<std::size_t>(in.n_classes));
  for (int f : candidates) {
    for (std::size_t i = 0; i < n; ++i) {
      order[i] = {in.rows[node[i]][static_cast<std::size_t>(f)], in.labels[node[i]]};
    }
    std::sort(order.begin(), order.end());
    std::fill(left_counts.begin(), left_counts.end(), 0);
    std::fill(total_counts.begin(), total_counts.end(), 0);
    for (const auto& [v, lab] : order) ++total_counts[static_cast<std::size_t>(lab)];
    std::size_t n_left = 0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      ++left_counts[static_cast<std::size_t>(order[i].second)];
      ++n_left;
      if (order[i].first == order[i + 1].first) continue;
      double thr = order[i].first + (order[i + 1].first - order[i].first) / 2.0;
      if (!(thr > order[i].first)) thr = order[i + 1].first;  // adjacent doubles
      std::size_t n_right = n - n_left;
      double gl = 1.0, gr = 1.0;
      for (std::size_t c = 0; c < left_counts.size(); ++c) {
        double pl = static_cast<double>(left_counts[c]) / static_cast<double>(n_left);
        double pr = static_cast<double>(total_counts[c] - left_counts[c]) /
                    static_cast<double>(n_right);
        gl -= pl * pl;
        gr -= pr * pr;
      }
      double weighted = (static_cast<double>(n_left) * gl + static_cast<double>(n_right) * gr) /
                        static_cast<double>(n);
      double dec = node_gini - weighted;
      if (dec > best.decrease) {  // strict: first hit wins ties (lowest feature, threshold)
        best.found = true;
        best.feature = f;
        best.threshold = thr;
        best.decrease = dec;
      }
    }
  }
  if (best.found) {
    best.decrease *= static_cast<double>(n) / static_cast<double>(in.n_total);
  }
  return best;
}

void grow(const TreeInput& in, Rng& rng, std::vector<std::size_t>& node, int depth, int max_depth,
          int min_split, int tries, std::vector<double>& importance) {
  const std::size_t n = node.size();
  if (depth >= max_depth || n < static_cast<std::size_t>(min_split)) return;
  std::vector<std::size_t> counts(static_cast<std::size_t>(in.n_classes));
  for (std::size_t idx : node) ++counts[static_cast<std::size_t>(in.labels[idx])];
  double g = gini(counts, n);
  if (g <= 0) return;

  std::vector<std::size_t> picked =
      rng.sample_without_replacement(static_cast<std::size_t>(in.n_features),
                                     static_cast<std::size_t>(tries));
  std::vector<int> candidates(picked.begin(), picked.end());
  std::sort(candidates.begin(), candidates.end());

  NodeSplit split = best_split(in, node, candidates, g);
  if (!split.found) return;
  importance[static_cast<std::size_t>(split.feature)] += split.decrease;

  std::vector<std::size_t> left, right;
  for (std::size_t idx : node) {
    if (in.rows[idx][static_cast<std::size_t>(split.feature)] < split.threshold) {
      left.push_back(idx);
    } else {
      right.push_back(idx);
    }
  }
  node.clear();
  node.shrink_to_fit();
  grow(in, rng, left, depth + 1, max_depth, min_split, tries, importance);
  grow(in, rng, right, depth + 1, max_depth, min_split, tries, importance);
}

std::uint64_t row_content_hash(const std::vector<double>& row, int label) {
  std::uint64_t h = fnv1a64(row.data(), row.size() * sizeof(double));
  return fnv1a64_combine(h, &label, sizeof(label));
}

}  // namespace

std::vector<std::pair<std::string, double>> rf_importance(const CsvTable& table,
                                                          const ForestConfig& config) {
  config.validate();
  if (!table.has_labels) throw PreconditionError("importance ranking needs a labeled table");
  if (table.rows.size() < static_cast<std::size_t>(config.min_split)) {
    throw PreconditionError("too few rows for importance ranking: " +
                            std::to_string(table.rows.size()));
  }
  const int d = static_cast<int>(table.feature_ids.size());
  if (d == 0) throw PreconditionError("importance ranking needs at least one feature");
  for (const auto& row : table.rows) {
    for (double v : row) {
      if (std::isnan(v)) throw PreconditionError("importance ranking needs imputed data");
    }
  }

  std::vector<std::string> class_names;
  std::vector<int> labels(table.rows.size());
  {
    std::vector<std::string> sorted = table.labels;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    class_names = sorted;
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
      labels[i] = static_cast<int>(
          std::lower_bound(class_names.begin(), class_names.end(), table.labels[i]) -
          class_names.begin());
    }
  }
  if (class_names.size() < 2) {
    throw PreconditionError("importance ranking needs at least 2 classes, got " +
                            std::to_string(class_names.size()));
  }

  // Canonical row order by content hash so bootstrap draws do not depend on
  // the order rows arrived in.
  const std::size_t n = table.rows.size();
  std::vector<std::size_t> canon(n);
  for (std::size_t i = 0; i < n; ++i) canon[i] = i;
  std::vector<std::uint64_t> hashes(n);
  for (std::size_t i = 0; i < n; ++i) hashes[i] = row_content_hash(table.rows[i], labels[i]);
  std::sort(canon.begin(), canon.end(), [&](std::size_t a, std::size_t b) {
    if (hashes[a] != hashes[b]) return hashes[a] < hashes[b];
    if (labels[a] != labels[b]) return labels[a] < labels[b];
    return table.rows[a] < table.rows[b];
  });

  std::vector<std::vector<double>> rows(n);
  std::vector<int> sorted_labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    rows[i] = table.rows[canon[i]];
    sorted_labels[i] = labels[canon[i]];
  }

  int tries = config.feature_subsample > 0.0
                  ? static_cast<int>(std::floor(config.feature_subsample * d + 1e-9))
                  : static_cast<int>(std::floor(std::sqrt(static_cast<double>(d))));
  tries = std::max(1, std::min(tries, d));

  TreeInput in{rows, sorted_labels, d, static_cast<int>(class_names.size()), n};

  std::vector<std::vector<double>> per_tree(static_cast<std::size_t>(config.n_trees));
  parallel_for(static_cast<std::size_t>(config.n_trees), [&](std::size_t t) {
    Rng rng(config.seed ^ static_cast<std::uint64_t>(t));
    std::vector<std::size_t> sample(n);
    for (std::size_t i = 0; i < n; ++i) sample[i] = rng.index(n);
    std::vector<double> importance(static_cast<std::size_t>(d), 0.0);
    grow(in, rng, sample, 0, config.max_depth, config.min_split, tries, importance);
    per_tree[t] = std::move(importance);
  });

  std::vector<double> mean(static_cast<std::size_t>(d), 0.0);
  for (const auto& imp : per_tree) {
    for (std::size_t f = 0; f < mean.size(); ++f) mean[f] += imp[f];
  }
  double total = 0;
  for (double& v : mean) {
    v /= static_cast<double>(config.n_trees);
    total += v;
  }
  if (total > 0) {
    for (double& v : mean) v /= total;
  }

  std::vector<std::pair<std::string, double>> out;
  out.reserve(mean.size());
  for (std::size_t f = 0; f < mean.size(); ++f) {
    out.emplace_back(table.feature_ids[f], mean[f]);
  }
  return out;
}

SelectionReport select_features(const CsvTable& table, const SelectionConfig& config) {
  if (table.feature_ids.empty()) throw PreconditionError("selection input has no features");
  if (table.rows.empty()) throw PreconditionError("selection input has no rows");

  const std::size_t d = table.feature_ids.size();
  SelectionReport report;
  std::vector<bool> alive(d, true);

  std::vector<std::vector<double>> columns(d, std::vector<double>(table.rows.size()));
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    for (std::size_t f = 0; f < d; ++f) columns[f][r] = table.rows[r][f];
  }

  for (std::size_t f = 0; f < d; ++f) {
    double ratio = missing_ratio(columns[f]);
    if (ratio > config.missing_threshold) {
      alive[f] = false;
      report.removed.push_back({table.feature_ids[f], RemovalRule::missing, ratio});
    }
  }
  for (std::size_t f = 0; f < d; ++f) {
    if (!alive[f]) continue;
    double h = entropy_bits(columns[f]);
    if (h == 0.0) {
      alive[f] = false;
      report.removed.push_back({table.feature_ids[f], RemovalRule::zero_entropy, h});
    }
  }

  std::vector<std::size_t> survivors;
  for (std::size_t f = 0; f < d; ++f) {
    if (alive[f]) survivors.push_back(f);
  }
  if (survivors.empty()) throw PreconditionError("selection removed every feature");

  std::size_t cut = static_cast<std::size_t>(
      std::floor(config.bottom_fraction * static_cast<double>(survivors.size())));
  if (cut > 0) {
    CsvTable sub;
    sub.has_labels = table.has_labels;
    sub.labels = table.labels;
    for (std::size_t f : survivors) sub.feature_ids.push_back(table.feature_ids[f]);
    sub.rows.resize(table.rows.size());
    std::vector<double> medians(survivors.size());
    for (std::size_t j = 0; j < survivors.size(); ++j) {
      std::vector<double> vals;
      for (double v : columns[survivors[j]]) {
        if (!std::isnan(v)) vals.push_back(v);
      }
      std::sort(vals.begin(), vals.end());
      medians[j] = vals.empty() ? 0.0
                   : vals.size() % 2 == 1
                       ? vals[vals.size() / 2]
                       : (vals[vals.size() / 2 - 1] + vals[vals.size() / 2]) / 2.0;
    }
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      sub.rows[r].resize(survivors.size());
      for (std::size_t j = 0; j < survivors.size(); ++j) {
        double v = table.rows[r][survivors[j]];
        sub.rows[r][j] = std::isnan(v) ? medians[j] : v;
      }
    }

    auto ranked = rf_importance(sub, config.forest);
    report.importances = ranked;

    std::vector<std::size_t> order(ranked.size());
    for (std::size_t j = 0; j < order.size(); ++j) order[j] = j;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (ranked[a].second != ranked[b].second) return ranked[a].second < ranked[b].second;
      return ranked[a].first < ranked[b].first;
    });
    for (std::size_t j = 0; j < cut; ++j) {
      std::size_t f = survivors[order[j]];
      alive[f] = false;
      report.removed.push_back(
          {table.feature_ids[f], RemovalRule::low_importance, ranked[order[j]].second});
    }
  }

  for (std::size_t f = 0; f < d; ++f) {
    if (alive[f]) report.retained_ids.push_back(table.feature_ids[f]);
  }
  if (report.retained_ids.empty()) throw PreconditionError("selection removed every feature");
  return report;
}

Preprocessing selection_preprocessing(const CsvTable& table, const SelectionReport& report) {
  Preprocessing prep;
  prep.feature_ids = report.retained_ids;
  for (const auto& id : report.retained_ids) {
    std::size_t f = 0;
    while (f < table.feature_ids.size() && table.feature_ids[f] != id) ++f;
    if (f == table.feature_ids.size()) {
      throw PreconditionError("retained feature '" + id + "' not present in table");
    }
    std::vector<double> vals;
    for (const auto& row : table.rows) {
      if (!std::isnan(row[f])) vals.push_back(row[f]);
    }
    std::sort(vals.begin(), vals.end());
    double median = vals.empty() ? 0.0
                    : vals.size() % 2 == 1
                        ? vals[vals.size() / 2]
                        : (vals[vals.size() / 2 - 1] + vals[vals.size() / 2]) / 2.0;
    double sum = 0;
    for (const auto& row : table.rows) {
      sum += std::isnan(row[f]) ? median : row[f];
    }
    double mean = sum / static_cast<double>(table.rows.size());
    double sq = 0;
    for (const auto& row : table.rows) {
      double v = std::isnan(row[f]) ? median : row[f];
      sq += (v - mean) * (v - mean);
    }
    double sd = std::sqrt(sq / static_cast<double>(table.rows.size()));
    prep.medians.push_back(median);
    prep.means.push_back(mean);
    prep.stds.push_back(sd);
  }
  return prep;
}

Eigen::VectorXd Preprocessing::apply(const std::vector<double>& row) const {
  if (row.size() != feature_ids.size()) {
    throw PreconditionError("row width " + std::to_string(row.size()) +
                            " does not match preprocessing width " +
                            std::to_string(feature_ids.size()));
  }
  Eigen::VectorXd out(static_cast<Eigen::Index>(row.size()));
  for (std::size_t f = 0; f < row.size(); ++f) {
    double v = std::isnan(row[f]) ? medians[f] : row[f];
    out[static_cast<Eigen::Index>(f)] = stds[f] > 0 ? (v - means[f]) / stds[f] : v;
  }
  return out;
}

nlohmann::json Preprocessing::to_json() const {
  nlohmann::json cols = nlohmann::json::array();
  for (std::size_t f = 0; f < feature_ids.size(); ++f) {
    cols.push_back({{"id", feature_ids[f]},
                    {"median", medians[f]},
                    {"mean", means[f]},
                    {"std", stds[f]}});
  }
  return cols;
}

Preprocessing Preprocessing::from_json(const nlohmann::json& j) {
  Preprocessing prep;
  for (const auto& col : j) {
    prep.feature_ids.push_back(col.at("id").get<std::string>());
    prep.medians.push_back(col.at("median").get<double>());
    prep.means.push_back(col.at("mean").get<double>());
    prep.stds.push_back(col.at("std").get<double>());
  }
  return prep;
}

nlohmann::json selection_manifest(const SelectionReport& report, const SelectionConfig& config,
                                  const Preprocessing& prep, const std::string& source_hash) {
  nlohmann::json removed = nlohmann::json::array();
  for (const auto& r : report.removed) {
    removed.push_back(
        {{"id", r.feature_id}, {"rule", removal_rule_name(r.rule)}, {"statistic", r.statistic}});
  }
  nlohmann::json importances = nlohmann::json::array();
  for (const auto& [id, imp] : report.importances) {
    importances.push_back({{"id", id}, {"importance", imp}});
  }
  return {{"format_version", 1},
          {"kind", "preprocessing"},
          {"retained", report.retained_ids},
          {"removed", removed},
          {"importances", importances},
          {"columns", prep.to_json()},
          {"thresholds",
           {{"missing_threshold", config.missing_threshold},
            {"bottom_fraction", config.bottom_fraction}}},
          {"forest",
           {{"n_trees", config.forest.n_trees},
            {"max_depth", config.forest.max_depth},
            {"min_split", config.forest.min_split},
            {"feature_subsample", config.forest.feature_subsample},
            {"seed", config.forest.seed}}},
          {"source_hash", source_hash}};
}

}  // namespace metauad
