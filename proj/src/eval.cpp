#include "metauad/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "metauad/common.hpp"

namespace metauad {

std::int64_t ConfusionMatrix::total() const {
  std::int64_t t = 0;
  for (const auto& row : counts) {
    for (std::int64_t c : row) t += c;
  }
  return t;
}

void ConfusionMatrix::add(const ConfusionMatrix& other) {
  if (other.n_slots() != n_slots()) throw PreconditionError("confusion size mismatch");
  for (std::size_t t = 0; t < counts.size(); ++t) {
    for (std::size_t p = 0; p < counts.size(); ++p) counts[t][p] += other.counts[t][p];
  }
}

ConfusionMatrix confusion(const std::vector<int>& preds, const std::vector<int>& truth,
                          int n_slots) {
  if (preds.size() != truth.size()) {
    throw PreconditionError("predictions and truth differ in length: " +
                            std::to_string(preds.size()) + " vs " + std::to_string(truth.size()));
  }
  ConfusionMatrix cm(n_slots);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] < 0 || preds[i] >= n_slots || truth[i] < 0 || truth[i] >= n_slots) {
      throw PreconditionError("slot out of range at sample " + std::to_string(i));
    }
    ++cm.counts[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(preds[i])];
  }
  return cm;
}

namespace {

void slot_tallies(const ConfusionMatrix& cm, int slot, std::int64_t& tp, std::int64_t& fp,
                  std::int64_t& fn) {
  if (slot < 0 || slot >= cm.n_slots()) throw PreconditionError("slot out of range");
  const std::size_t s = static_cast<std::size_t>(slot);
  tp = cm.counts[s][s];
  fp = 0;
  fn = 0;
  for (std::size_t t = 0; t < cm.counts.size(); ++t) {
    if (t != s) fp += cm.counts[t][s];
  }
  for (std::size_t p = 0; p < cm.counts.size(); ++p) {
    if (p != s) fn += cm.counts[s][p];
  }
}

}  // namespace

double precision(const ConfusionMatrix& cm, int slot) {
  std::int64_t tp, fp, fn;
  slot_tallies(cm, slot, tp, fp, fn);
  return tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
}

double recall(const ConfusionMatrix& cm, int slot) {
  std::int64_t tp, fp, fn;
  slot_tallies(cm, slot, tp, fp, fn);
  return tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
}

double f1(const ConfusionMatrix& cm, int slot) {
  std::int64_t tp, fp, fn;
  slot_tallies(cm, slot, tp, fp, fn);
  // single division keeps integer-count cases exact (e.g. 8/2/2 -> 0.8)
  std::int64_t denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& s : per_class) {
    per.push_back(
        {{"slot", s.slot}, {"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}});
  }
  return {{"confusion", pooled.counts},
          {"per_class", per},
          {"novel_f1_pooled", novel_f1},
          {"macro_f1", macro_f1},
          {"trial_novel_f1", trial_novel_f1},
          {"mean_novel_f1", mean},
          {"std_novel_f1", stddev}};
}

nlohmann::json MShotReport::to_json() const {
  return {{"pre_training", pre_training.to_json()}, {"fine_tuning", fine_tuning.to_json()}};
}

namespace {

EvalReport finalize_report(ConfusionMatrix pooled, std::vector<double> trial_f1, int novel_slot) {
  EvalReport rep;
  rep.pooled = std::move(pooled);
  double macro = 0;
  for (int s = 0; s < rep.pooled.n_slots(); ++s) {
    SlotScore score;
    score.slot = s;
    score.precision = precision(rep.pooled, s);
    score.recall = recall(rep.pooled, s);
    score.f1 = f1(rep.pooled, s);
    macro += score.f1;
    rep.per_class.push_back(score);
  }
  rep.macro_f1 = rep.pooled.n_slots() == 0 ? 0 : macro / rep.pooled.n_slots();
  rep.novel_f1 = f1(rep.pooled, novel_slot);
  rep.trial_novel_f1 = std::move(trial_f1);
  double mean = 0;
  for (double v : rep.trial_novel_f1) mean += v;
  mean = rep.trial_novel_f1.empty() ? 0 : mean / static_cast<double>(rep.trial_novel_f1.size());
  double sq = 0;
  for (double v : rep.trial_novel_f1) sq += (v - mean) * (v - mean);
  rep.mean = mean;
  rep.stddev = rep.trial_novel_f1.empty()
                   ? 0
                   : std::sqrt(sq / static_cast<double>(rep.trial_novel_f1.size()));
  return rep;
}

struct TrialOutcome {
  ConfusionMatrix pre_cm;
  ConfusionMatrix fine_cm;
  double pre_f1 = 0;
  double fine_f1 = 0;
};

}  // namespace

MShotReport run_mshot_protocol(const MetaParameters& meta, const LabeledDataset& dataset,
                               const ClassSplit* split, int k, int m, int adapt_steps, int trials,
                               std::uint64_t seed, std::uint64_t trial_offset) {
  meta.validate();
  if (trials < 1) throw PreconditionError("trials must be >= 1");
  if (meta.theta.shape.output_dim != k + 2) {
    throw PreconditionError("checkpoint has " + std::to_string(meta.theta.shape.output_dim) +
                            " output slots but k+2 = " + std::to_string(k + 2));
  }
  const std::vector<int>& eligible =
      split != nullptr ? split->test_classes : dataset.anomaly_classes;
  if (eligible.empty()) throw PreconditionError("no classes eligible for adaptation trials");

  const int n_slots = k + 2;
  const int novel_slot = k + 1;
  std::vector<TrialOutcome> outcomes(static_cast<std::size_t>(trials));

  parallel_for(static_cast<std::size_t>(trials), [&](std::size_t t) {
    Rng trng(seed ^ (trial_offset + t));
    int cls = eligible[trng.index(eligible.size())];
    EpisodeTask task = make_adaptation_task(dataset, split, cls, k, m, trng.next());

    std::vector<int> truth;
    truth.reserve(task.validation.size());
    for (const auto& s : task.validation) truth.push_back(s.label);

    std::vector<int> pre_preds, fine_preds;
    pre_preds.reserve(truth.size());
    fine_preds.reserve(truth.size());
    for (const auto& s : task.validation) pre_preds.push_back(predict(meta.theta, s.x));
    ParameterSet adapted = adapt(meta, task.support, adapt_steps);
    for (const auto& s : task.validation) fine_preds.push_back(predict(adapted, s.x));

    TrialOutcome out;
    out.pre_cm = confusion(pre_preds, truth, n_slots);
    out.fine_cm = confusion(fine_preds, truth, n_slots);
    out.pre_f1 = f1(out.pre_cm, novel_slot);
    out.fine_f1 = f1(out.fine_cm, novel_slot);
    outcomes[t] = std::move(out);
  });

  ConfusionMatrix pre_pool(n_slots), fine_pool(n_slots);
  std::vector<double> pre_f1s, fine_f1s;
  for (const auto& out : outcomes) {
    pre_pool.add(out.pre_cm);
    fine_pool.add(out.fine_cm);
    pre_f1s.push_back(out.pre_f1);
    fine_f1s.push_back(out.fine_f1);
  }

  MShotReport rep;
  rep.pre_training = finalize_report(std::move(pre_pool), std::move(pre_f1s), novel_slot);
  rep.fine_tuning = finalize_report(std::move(fine_pool), std::move(fine_f1s), novel_slot);
  return rep;
}

DatasetSummary dataset_summary(const std::vector<std::string>& labels,
                               const std::string& normal_label) {
  DatasetSummary summary;
  summary.normal_label = normal_label;
  summary.total_rows = labels.size();
  std::map<std::string, std::size_t> counts;
  for (const auto& l : labels) ++counts[l];
  auto it = counts.find(normal_label);
  summary.normal_count = it == counts.end() ? 0 : it->second;
  for (const auto& [name, count] : counts) {
    if (name == normal_label) continue;
    SummaryRow row;
    row.class_name = name;
    row.count = count;
    row.ratio = static_cast<double>(summary.normal_count) / static_cast<double>(count);
    summary.anomalies.push_back(row);
  }
  std::sort(summary.anomalies.begin(), summary.anomalies.end(),
            [](const SummaryRow& a, const SummaryRow& b) {
              if (a.ratio != b.ratio) return a.ratio > b.ratio;
              return a.class_name < b.class_name;
            });
  return summary;
}

DatasetSummary dataset_summary(const LabeledDataset& dataset) {
  std::vector<std::string> labels;
  labels.reserve(dataset.n_rows());
  for (int c : dataset.row_class) labels.push_back(dataset.name_of(c));
  return dataset_summary(labels, dataset.name_of(dataset.normal_class));
}

}  // namespace metauad
