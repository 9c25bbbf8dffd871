#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "metauad/episodes.hpp"
#include "metauad/net.hpp"

namespace metauad {

enum class OuterMode { exact, first_order };

const char* outer_mode_name(OuterMode mode);
OuterMode outer_mode_from_name(const std::string& name);

// The learned state: initialization theta plus the per-parameter learned
// step vector alpha (flat, same length as flatten(theta)) and the outer
// learning rate beta.
struct MetaParameters {
  ParameterSet theta;
  Eigen::VectorXd alpha;
  double beta = 0.001;

  void validate() const;
};

struct TrainConfig {
  int episodes = 10000;
  int k = 5;
  int m = 10;
  int n = 10;
  int inner_steps_train = 1;
  int adapt_steps = 10;
  OuterMode outer_mode = OuterMode::exact;
  std::uint64_t seed = 0;
  double alpha_init = 0.01;
  double beta = 0.001;
  std::vector<int> hidden = {256, 128, 128};
  int early_stop_patience = 500;  // episodes without monitor improvement; 0 disables
  int monitor_stride = 10;        // monitor every this many episodes

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct EpisodeLogEntry {
  int episode = 0;
  double mean_val_loss = 0;
  double wall_ms = 0;
};

struct MonitorEntry {
  int episode = 0;
  double loss = 0;
};

struct MetaTrainResult {
  MetaParameters meta;
  std::vector<EpisodeLogEntry> log;
  std::vector<MonitorEntry> monitor;
  int episodes_run = 0;
  bool stopped_early = false;
  double alpha_negative_fraction = 0;
};

// One gradient step on the support set: theta' = theta - alpha .* grad.
ParameterSet inner_update(const MetaParameters& meta, const Batch& support);

double task_val_loss(const ParameterSet& theta_i, const Batch& validation);

// One meta-step over the episode's tasks. Returns the per-task validation
// losses measured at the adapted parameters (before the meta update).
std::vector<double> outer_update(MetaParameters& meta, const Episode& episode, OuterMode mode,
                                 int inner_steps = 1);

MetaTrainResult meta_train(const LabeledDataset& dataset, const ClassSplit& split,
                           const TrainConfig& cfg);

// Repeated inner updates with frozen alpha; meta itself is untouched.
ParameterSet adapt(const MetaParameters& meta, const Batch& support, int steps);

// Argmax slot, ties toward the lowest index.
int predict(const ParameterSet& params, const Eigen::VectorXd& x, Prediction* pred = nullptr);

// Checkpoint container: theta + alpha arrays, train config echo, and enough
// context (preprocessing manifest, class split names, dataset hash) to run
// adaptation and evaluation without the original training inputs.
struct MetaCheckpoint {
  MetaParameters meta;
  TrainConfig config;
  nlohmann::json preprocessing;  // selection manifest JSON
  std::vector<std::string> train_class_names;
  std::vector<std::string> test_class_names;
  std::string normal_label = "BENIGN";
  std::uint64_t dataset_hash = 0;
  int episodes_run = 0;
};

void save_meta_checkpoint(const std::string& path, const MetaCheckpoint& ckpt);
MetaCheckpoint load_meta_checkpoint(const std::string& path);

}  // namespace metauad
