#include "metauad/episodes.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "metauad/common.hpp"

namespace metauad {

int LabeledDataset::class_id(const std::string& name) const {
  auto it = std::lower_bound(class_names.begin(), class_names.end(), name);
  if (it == class_names.end() || *it != name) return -1;
  return static_cast<int>(it - class_names.begin());
}

bool ClassSplit::in_train(int class_id) const {
  return std::binary_search(train_classes.begin(), train_classes.end(), class_id);
}

bool ClassSplit::in_test(int class_id) const {
  return std::binary_search(test_classes.begin(), test_classes.end(), class_id);
}

LabeledDataset make_dataset(const CsvTable& table, const Preprocessing& prep,
                            const std::string& normal_label) {
  if (!table.has_labels) throw PreconditionError("dataset CSV is unlabeled");
  if (table.rows.empty()) throw PreconditionError("dataset CSV has no rows");

  // Locate each retained feature by name; extra CSV columns are ignored so a
  // full candidate export can feed a narrower manifest.
  std::vector<std::size_t> col_of;
  std::vector<std::string> missing;
  for (const auto& id : prep.feature_ids) {
    std::size_t c = 0;
    while (c < table.feature_ids.size() && table.feature_ids[c] != id) ++c;
    if (c == table.feature_ids.size()) {
      missing.push_back(id);
    } else {
      col_of.push_back(c);
    }
  }
  if (!missing.empty()) {
    std::string names = missing[0];
    for (std::size_t i = 1; i < missing.size(); ++i) names += ", " + missing[i];
    throw PreconditionError("dataset is missing manifest feature(s): " + names);
  }

  LabeledDataset ds;
  ds.feature_ids = prep.feature_ids;
  const std::size_t n = table.rows.size();
  const std::size_t d = prep.feature_ids.size();
  ds.x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  std::vector<double> picked(d);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < d; ++j) picked[j] = table.rows[r][col_of[j]];
    ds.x.row(static_cast<Eigen::Index>(r)) = prep.apply(picked).transpose();
  }

  std::vector<std::string> names = table.labels;
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  ds.class_names = names;
  ds.normal_class = ds.class_id(normal_label);
  if (ds.normal_class < 0) {
    throw PreconditionError("no rows labeled with the normal class '" + normal_label + "'");
  }
  for (int c = 0; c < static_cast<int>(names.size()); ++c) {
    if (c != ds.normal_class) ds.anomaly_classes.push_back(c);
  }

  ds.row_class.resize(n);
  ds.rows_by_class.assign(names.size(), {});
  for (std::size_t r = 0; r < n; ++r) {
    int c = ds.class_id(table.labels[r]);
    ds.row_class[r] = c;
    ds.rows_by_class[static_cast<std::size_t>(c)].push_back(r);
  }

  std::uint64_t h = fnv1a64(nullptr, 0);
  for (const auto& id : ds.feature_ids) h = fnv1a64_combine(h, id.data(), id.size());
  for (std::size_t r = 0; r < n; ++r) {
    h = fnv1a64_combine(h, ds.x.row(static_cast<Eigen::Index>(r)).data(),
                        d * sizeof(double));
    h = fnv1a64_combine(h, &ds.row_class[r], sizeof(int));
  }
  for (const auto& cn : ds.class_names) h = fnv1a64_combine(h, cn.data(), cn.size());
  ds.content_hash = h;
  return ds;
}

LabeledDataset load_dataset(const std::string& csv_path, const std::string& manifest_path,
                            const std::string& normal_label, const std::string& label_col) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_text_file(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(manifest_path + ": bad JSON: " + e.what());
  }
  if (!manifest.contains("format_version") || manifest["format_version"].get<int>() != 1) {
    throw FormatError(manifest_path + ": unknown preprocessing manifest version");
  }
  if (!manifest.contains("columns")) {
    throw FormatError(manifest_path + ": not a preprocessing manifest (no columns)");
  }
  Preprocessing prep = Preprocessing::from_json(manifest["columns"]);
  CsvTable table = read_csv(csv_path, label_col);
  if (!table.has_labels) {
    throw PreconditionError(csv_path + ": unlabeled (no '" + label_col + "' column)");
  }
  return make_dataset(table, prep, normal_label);
}

ClassSplit split_classes(const LabeledDataset& dataset,
                         const std::vector<std::string>& test_class_names) {
  ClassSplit split;
  for (const auto& name : test_class_names) {
    int c = dataset.class_id(name);
    if (c < 0) throw PreconditionError("unknown test class '" + name + "'");
    if (c == dataset.normal_class) {
      throw PreconditionError("the normal class cannot be held out for testing");
    }
    split.test_classes.push_back(c);
  }
  std::sort(split.test_classes.begin(), split.test_classes.end());
  auto dup = std::adjacent_find(split.test_classes.begin(), split.test_classes.end());
  if (dup != split.test_classes.end()) {
    throw PreconditionError("duplicate test class '" + dataset.name_of(*dup) + "'");
  }
  for (int c : dataset.anomaly_classes) {
    if (!split.in_test(c)) split.train_classes.push_back(c);
  }
  if (split.test_classes.empty()) throw PreconditionError("class split has no test classes");
  if (split.train_classes.empty()) throw PreconditionError("class split has no train classes");
  return split;
}

ClassSplit split_classes_random(const LabeledDataset& dataset, int test_count,
                                std::uint64_t seed) {
  const int total = static_cast<int>(dataset.anomaly_classes.size());
  if (test_count <= 0) throw PreconditionError("test class count must be positive");
  if (test_count >= total) {
    throw PreconditionError("cannot hold out " + std::to_string(test_count) + " of " +
                            std::to_string(total) + " anomaly classes");
  }
  Rng rng(seed);
  std::vector<std::size_t> pick = rng.sample_without_replacement(
      static_cast<std::size_t>(total), static_cast<std::size_t>(test_count));
  ClassSplit split;
  for (std::size_t p : pick) split.test_classes.push_back(dataset.anomaly_classes[p]);
  std::sort(split.test_classes.begin(), split.test_classes.end());
  for (int c : dataset.anomaly_classes) {
    if (!split.in_test(c)) split.train_classes.push_back(c);
  }
  return split;
}

std::vector<std::string> class_names_of(const LabeledDataset& dataset,
                                        const std::vector<int>& ids) {
  std::vector<std::string> names;
  names.reserve(ids.size());
  for (int c : ids) names.push_back(dataset.name_of(c));
  return names;
}

namespace {

Sample row_sample(const LabeledDataset& dataset, std::size_t row, int slot) {
  Sample s;
  s.x = dataset.x.row(static_cast<Eigen::Index>(row)).transpose();
  s.label = slot;
  return s;
}

}  // namespace

Episode sample_episode(const LabeledDataset& dataset, const ClassSplit& split, int k, int m, int n,
                       std::uint64_t seed) {
  if (k < 1 || m < 1 || n < 1) throw PreconditionError("episode needs k, m, n >= 1");
  if (static_cast<std::size_t>(k) > split.train_classes.size()) {
    throw PreconditionError("episode needs " + std::to_string(k) + " classes but only " +
                            std::to_string(split.train_classes.size()) + " are in training");
  }
  const auto& normal_rows = dataset.rows_by_class[static_cast<std::size_t>(dataset.normal_class)];
  const std::size_t per_task = static_cast<std::size_t>(m + n);
  if (normal_rows.size() < per_task * static_cast<std::size_t>(k)) {
    throw PreconditionError("class '" + dataset.name_of(dataset.normal_class) + "' has " +
                            std::to_string(normal_rows.size()) + " rows, episode needs " +
                            std::to_string(per_task * static_cast<std::size_t>(k)));
  }

  Rng rng(seed);
  Episode ep;
  std::vector<std::size_t> pick = rng.sample_without_replacement(
      split.train_classes.size(), static_cast<std::size_t>(k));
  for (std::size_t p : pick) ep.slot_classes.push_back(split.train_classes[p]);

  std::vector<std::size_t> normal_pick = rng.sample_without_replacement(
      normal_rows.size(), per_task * static_cast<std::size_t>(k));

  for (int slot = 0; slot < k; ++slot) {
    int cls = ep.slot_classes[static_cast<std::size_t>(slot)];
    const auto& rows = dataset.rows_by_class[static_cast<std::size_t>(cls)];
    if (rows.size() < per_task) {
      throw PreconditionError("class '" + dataset.name_of(cls) + "' has " +
                              std::to_string(rows.size()) + " rows, task needs " +
                              std::to_string(per_task));
    }
    std::vector<std::size_t> apick = rng.sample_without_replacement(rows.size(), per_task);

    EpisodeTask task;
    task.anomaly_class = cls;
    for (int i = 0; i < m; ++i) {
      task.support.push_back(row_sample(dataset, rows[apick[static_cast<std::size_t>(i)]], slot));
    }
    std::size_t base = static_cast<std::size_t>(slot) * per_task;
    for (int i = 0; i < m; ++i) {
      task.support.push_back(
          row_sample(dataset, normal_rows[normal_pick[base + static_cast<std::size_t>(i)]], k));
    }
    for (int i = 0; i < n; ++i) {
      task.validation.push_back(
          row_sample(dataset, rows[apick[static_cast<std::size_t>(m + i)]], slot));
    }
    for (int i = 0; i < n; ++i) {
      task.validation.push_back(row_sample(
          dataset, normal_rows[normal_pick[base + static_cast<std::size_t>(m + i)]], k));
    }
    ep.tasks.push_back(std::move(task));
  }
  return ep;
}

EpisodeTask make_adaptation_task(const LabeledDataset& dataset, const ClassSplit* split,
                                 int new_class, int k, int m, std::uint64_t seed) {
  if (m < 1) throw PreconditionError("adaptation needs m >= 1");
  if (new_class < 0 || new_class >= static_cast<int>(dataset.class_names.size()) ||
      new_class == dataset.normal_class) {
    throw PreconditionError("adaptation class must be an anomaly class of the dataset");
  }
  if (split != nullptr && !split->in_test(new_class)) {
    throw PreconditionError("class '" + dataset.name_of(new_class) +
                            "' is not in the held-out test split");
  }
  const auto& rows = dataset.rows_by_class[static_cast<std::size_t>(new_class)];
  const auto& normal_rows = dataset.rows_by_class[static_cast<std::size_t>(dataset.normal_class)];
  if (rows.size() <= static_cast<std::size_t>(m)) {
    throw PreconditionError("class '" + dataset.name_of(new_class) + "' has " +
                            std::to_string(rows.size()) + " rows; adaptation with m=" +
                            std::to_string(m) + " leaves no validation remainder");
  }
  if (normal_rows.size() < rows.size()) {
    throw PreconditionError("class '" + dataset.name_of(dataset.normal_class) + "' has " +
                            std::to_string(normal_rows.size()) + " rows, adaptation needs " +
                            std::to_string(rows.size()));
  }

  Rng rng(seed);
  std::vector<std::size_t> aperm = rng.sample_without_replacement(rows.size(), rows.size());
  std::vector<std::size_t> nperm = rng.sample_without_replacement(normal_rows.size(), rows.size());

  const int novel_slot = k + 1;
  const int normal_slot = k;
  EpisodeTask task;
  task.anomaly_class = new_class;
  for (int i = 0; i < m; ++i) {
    task.support.push_back(row_sample(dataset, rows[aperm[static_cast<std::size_t>(i)]], novel_slot));
  }
  for (int i = 0; i < m; ++i) {
    task.support.push_back(
        row_sample(dataset, normal_rows[nperm[static_cast<std::size_t>(i)]], normal_slot));
  }
  for (std::size_t i = static_cast<std::size_t>(m); i < rows.size(); ++i) {
    task.validation.push_back(row_sample(dataset, rows[aperm[i]], novel_slot));
  }
  for (std::size_t i = static_cast<std::size_t>(m); i < rows.size(); ++i) {
    task.validation.push_back(row_sample(dataset, normal_rows[nperm[i]], normal_slot));
  }
  return task;
}

}  // namespace metauad
