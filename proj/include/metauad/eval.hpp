#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "metauad/episodes.hpp"
#include "metauad/metasgd.hpp"

namespace metauad {

struct ConfusionMatrix {
  std::vector<std::vector<std::int64_t>> counts;  // [truth][pred]

  explicit ConfusionMatrix(int n_slots = 0)
      : counts(static_cast<std::size_t>(n_slots),
               std::vector<std::int64_t>(static_cast<std::size_t>(n_slots), 0)) {}

  int n_slots() const { return static_cast<int>(counts.size()); }
  std::int64_t total() const;
  void add(const ConfusionMatrix& other);
};

ConfusionMatrix confusion(const std::vector<int>& preds, const std::vector<int>& truth,
                          int n_slots);

double precision(const ConfusionMatrix& cm, int slot);
double recall(const ConfusionMatrix& cm, int slot);
double f1(const ConfusionMatrix& cm, int slot);  // zero denominators score 0

struct SlotScore {
  int slot = 0;
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

// Scores for one protocol variant, pooled across trials plus the per-trial
// novel-slot F1 series the headline mean/std are computed from.
struct EvalReport {
  ConfusionMatrix pooled;
  std::vector<SlotScore> per_class;
  double novel_f1 = 0;  // slot K+1 on the pooled confusion
  double macro_f1 = 0;
  std::vector<double> trial_novel_f1;
  double mean = 0;
  double stddev = 0;

  nlohmann::json to_json() const;
};

struct MShotReport {
  EvalReport pre_training;  // predict with meta theta as-is
  EvalReport fine_tuning;   // predict after adaptation on the trial support

  nlohmann::json to_json() const;
};

// Repeated-trial few-shot protocol: each trial draws a held-out class,
// builds an adaptation task, and scores the novel slot K+1 on the task's
// validation set both without and with adaptation. Trial t uses seed
// `seed ^ (trial_offset + t)`, so longer runs are concatenations of shorter
// ones. Pass split=nullptr to draw from every anomaly class of the dataset
// (the cross-dataset protocol).
MShotReport run_mshot_protocol(const MetaParameters& meta, const LabeledDataset& dataset,
                               const ClassSplit* split, int k, int m, int adapt_steps, int trials,
                               std::uint64_t seed, std::uint64_t trial_offset = 0);

struct SummaryRow {
  std::string class_name;
  std::size_t count = 0;
  double ratio = 0;  // normal count / class count
};

struct DatasetSummary {
  std::string normal_label;
  std::size_t normal_count = 0;
  std::size_t total_rows = 0;
  std::vector<SummaryRow> anomalies;  // descending ratio, then name
};

DatasetSummary dataset_summary(const std::vector<std::string>& labels,
                               const std::string& normal_label);
DatasetSummary dataset_summary(const LabeledDataset& dataset);

}  // namespace metauad
