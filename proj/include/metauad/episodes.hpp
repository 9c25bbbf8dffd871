#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "metauad/csv.hpp"
#include "metauad/net.hpp"
#include "metauad/select.hpp"

namespace metauad {

// Feature matrix with class bookkeeping, ready for episodic sampling.
// Rows are imputed and standardized through the selection-time statistics.
struct LabeledDataset {
  std::vector<std::string> feature_ids;  // preprocessing-manifest order
  Eigen::MatrixXd x;                     // n x d, standardized
  std::vector<int> row_class;            // per-row class id
  std::vector<std::string> class_names;  // class id -> name, sorted unique
  int normal_class = -1;
  std::vector<int> anomaly_classes;                     // ascending
  std::vector<std::vector<std::size_t>> rows_by_class;  // class id -> row indices
  std::uint64_t content_hash = 0;

  int n_features() const { return static_cast<int>(feature_ids.size()); }
  std::size_t n_rows() const { return static_cast<std::size_t>(x.rows()); }
  int class_id(const std::string& name) const;  // -1 when absent
  const std::string& name_of(int class_id) const { return class_names.at(static_cast<std::size_t>(class_id)); }
};

struct ClassSplit {
  std::vector<int> train_classes;  // ascending
  std::vector<int> test_classes;   // ascending

  bool in_train(int class_id) const;
  bool in_test(int class_id) const;
};

// One K-way task: an anomaly class with a support set to adapt on and a
// validation set to score. Labels are slot indices, not dataset class ids.
struct EpisodeTask {
  int anomaly_class = -1;
  Batch support;
  Batch validation;
};

struct Episode {
  std::vector<EpisodeTask> tasks;  // one per slot, slot i first
  std::vector<int> slot_classes;   // slot i -> class id
};

LabeledDataset make_dataset(const CsvTable& table, const Preprocessing& prep,
                            const std::string& normal_label);

LabeledDataset load_dataset(const std::string& csv_path, const std::string& manifest_path,
                            const std::string& normal_label = "BENIGN",
                            const std::string& label_col = "label");

// Hold out the named classes for meta-testing; everything else trains.
ClassSplit split_classes(const LabeledDataset& dataset,
                         const std::vector<std::string>& test_class_names);

// Hold out `test_count` anomaly classes chosen by seed.
ClassSplit split_classes_random(const LabeledDataset& dataset, int test_count, std::uint64_t seed);

std::vector<std::string> class_names_of(const LabeledDataset& dataset, const std::vector<int>& ids);

// K tasks over K distinct train classes. Slot layout: sampled class i gets
// slot i, normals get slot K, and slot K+1 stays reserved for the class met
// at adaptation time. Support holds m anomaly + m normal rows, validation
// n + n, all drawn without replacement (normals disjoint across tasks too).
Episode sample_episode(const LabeledDataset& dataset, const ClassSplit& split, int k, int m, int n,
                       std::uint64_t seed);

// Support: m rows of the new class (slot K+1) + m normals (slot K).
// Validation: every remaining row of the class + as many held-out normals.
// `split` restricts the class to the held-out set when provided.
EpisodeTask make_adaptation_task(const LabeledDataset& dataset, const ClassSplit* split,
                                 int new_class, int k, int m, std::uint64_t seed);

}  // namespace metauad
