#include "metauad/metasgd.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "metauad/common.hpp"

namespace metauad {

const char* outer_mode_name(OuterMode mode) {
  return mode == OuterMode::exact ? "exact" : "first_order";
}

OuterMode outer_mode_from_name(const std::string& name) {
  if (name == "exact") return OuterMode::exact;
  if (name == "first_order") return OuterMode::first_order;
  throw UsageError("unknown outer mode '" + name + "' (expected exact or first_order)");
}

void MetaParameters::validate() const {
  if (static_cast<std::size_t>(alpha.size()) != theta.shape.flat_size()) {
    throw PreconditionError("alpha length does not match theta parameter count");
  }
  if (!(beta > 0)) throw PreconditionError("beta must be positive");
}

void TrainConfig::validate() const {
  if (episodes < 0) throw PreconditionError("episodes must be >= 0");
  if (k < 1) throw PreconditionError("k must be >= 1");
  if (m < 1) throw PreconditionError("m must be >= 1");
  if (n < 1) throw PreconditionError("n must be >= 1");
  if (inner_steps_train < 1) throw PreconditionError("inner steps must be >= 1");
  if (adapt_steps < 1) throw PreconditionError("adapt steps must be >= 1");
  if (!(beta > 0)) throw PreconditionError("beta must be positive");
  if (early_stop_patience < 0) throw PreconditionError("patience must be >= 0");
  if (monitor_stride < 1) throw PreconditionError("monitor stride must be >= 1");
  if (outer_mode == OuterMode::exact && inner_steps_train > 1) {
    throw PreconditionError(
        "exact outer mode supports a single inner step; use first_order for multi-step");
  }
  for (int h : hidden) {
    if (h <= 0) throw PreconditionError("hidden layer sizes must be positive");
  }
}

nlohmann::json TrainConfig::to_json() const {
  return {{"episodes", episodes},
          {"k", k},
          {"m", m},
          {"n", n},
          {"inner_steps_train", inner_steps_train},
          {"adapt_steps", adapt_steps},
          {"outer_mode", outer_mode_name(outer_mode)},
          {"seed", seed},
          {"alpha_init", alpha_init},
          {"beta", beta},
          {"hidden", hidden},
          {"early_stop_patience", early_stop_patience},
          {"monitor_stride", monitor_stride}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig cfg;
  cfg.episodes = j.at("episodes").get<int>();
  cfg.k = j.at("k").get<int>();
  cfg.m = j.at("m").get<int>();
  cfg.n = j.at("n").get<int>();
  cfg.inner_steps_train = j.at("inner_steps_train").get<int>();
  cfg.adapt_steps = j.at("adapt_steps").get<int>();
  cfg.outer_mode = outer_mode_from_name(j.at("outer_mode").get<std::string>());
  cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.alpha_init = j.at("alpha_init").get<double>();
  cfg.beta = j.at("beta").get<double>();
  cfg.hidden = j.at("hidden").get<std::vector<int>>();
  cfg.early_stop_patience = j.at("early_stop_patience").get<int>();
  cfg.monitor_stride = j.at("monitor_stride").get<int>();
  return cfg;
}

ParameterSet inner_update(const MetaParameters& meta, const Batch& support) {
  meta.validate();
  Eigen::VectorXd g = grad(meta.theta, support);
  Eigen::VectorXd flat = meta.theta.flatten() - meta.alpha.cwiseProduct(g);
  return ParameterSet::unflatten(meta.theta.shape, flat);
}

double task_val_loss(const ParameterSet& theta_i, const Batch& validation) {
  return batch_loss(theta_i, validation);
}

namespace {

struct TaskGradients {
  Eigen::VectorXd theta_grad;
  Eigen::VectorXd alpha_grad;
  double val_loss = 0;
};

TaskGradients task_gradients(const MetaParameters& meta, const EpisodeTask& task, OuterMode mode,
                             int inner_steps) {
  TaskGradients out;
  Eigen::VectorXd theta0 = meta.theta.flatten();

  if (inner_steps == 1) {
    Eigen::VectorXd g = grad(meta.theta, task.support);
    ParameterSet adapted =
        ParameterSet::unflatten(meta.theta.shape, theta0 - meta.alpha.cwiseProduct(g));
    out.val_loss = batch_loss(adapted, task.validation);
    Eigen::VectorXd v = grad(adapted, task.validation);
    out.alpha_grad = -g.cwiseProduct(v);
    if (mode == OuterMode::exact) {
      // d/dtheta of L_val(theta - alpha.*g(theta)) = v - H(alpha.*v),
      // with H the support-loss Hessian at theta.
      out.theta_grad = v - hvp(meta.theta, task.support, meta.alpha.cwiseProduct(v));
    } else {
      out.theta_grad = v;
    }
    return out;
  }

  // Multi-step path (first_order only, enforced by TrainConfig::validate):
  // the adapted parameters come from repeated updates; the step gradients
  // accumulate into the alpha direction, theta keeps the plain val gradient.
  Eigen::VectorXd flat = theta0;
  Eigen::VectorXd g_sum = Eigen::VectorXd::Zero(theta0.size());
  for (int s = 0; s < inner_steps; ++s) {
    ParameterSet cur = ParameterSet::unflatten(meta.theta.shape, flat);
    Eigen::VectorXd g = grad(cur, task.support);
    g_sum += g;
    flat -= meta.alpha.cwiseProduct(g);
  }
  ParameterSet adapted = ParameterSet::unflatten(meta.theta.shape, flat);
  out.val_loss = batch_loss(adapted, task.validation);
  Eigen::VectorXd v = grad(adapted, task.validation);
  out.alpha_grad = -g_sum.cwiseProduct(v);
  out.theta_grad = v;
  return out;
}

}  // namespace

std::vector<double> outer_update(MetaParameters& meta, const Episode& episode, OuterMode mode,
                                 int inner_steps) {
  meta.validate();
  if (episode.tasks.empty()) throw PreconditionError("episode has no tasks");
  if (inner_steps < 1) throw PreconditionError("inner steps must be >= 1");
  if (mode == OuterMode::exact && inner_steps > 1) {
    throw PreconditionError(
        "exact outer mode supports a single inner step; use first_order for multi-step");
  }

  std::vector<TaskGradients> per_task(episode.tasks.size());
  parallel_for(episode.tasks.size(), [&](std::size_t t) {
    per_task[t] = task_gradients(meta, episode.tasks[t], mode, inner_steps);
  });

  Eigen::VectorXd theta_grad = Eigen::VectorXd::Zero(meta.alpha.size());
  Eigen::VectorXd alpha_grad = Eigen::VectorXd::Zero(meta.alpha.size());
  std::vector<double> losses;
  losses.reserve(per_task.size());
  for (const auto& tg : per_task) {
    theta_grad += tg.theta_grad;
    alpha_grad += tg.alpha_grad;
    losses.push_back(tg.val_loss);
  }

  Eigen::VectorXd flat = meta.theta.flatten() - meta.beta * theta_grad;
  meta.theta = ParameterSet::unflatten(meta.theta.shape, flat);
  meta.alpha -= meta.beta * alpha_grad;
  return losses;
}

namespace {

double monitor_loss(const MetaParameters& meta, const LabeledDataset& dataset,
                    const ClassSplit& split, const TrainConfig& cfg, std::uint64_t seed) {
  Episode ep = sample_episode(dataset, split, cfg.k, cfg.m, cfg.n, seed);
  double total = 0;
  for (const auto& task : ep.tasks) {
    ParameterSet adapted = meta.theta;
    MetaParameters frozen{meta.theta, meta.alpha, meta.beta};
    for (int s = 0; s < cfg.inner_steps_train; ++s) {
      frozen.theta = adapted;
      adapted = inner_update(frozen, task.support);
    }
    total += task_val_loss(adapted, task.validation);
  }
  return total / static_cast<double>(ep.tasks.size());
}

}  // namespace

MetaTrainResult meta_train(const LabeledDataset& dataset, const ClassSplit& split,
                           const TrainConfig& cfg) {
  cfg.validate();
  NetworkShape shape;
  shape.input_dim = dataset.n_features();
  shape.hidden = cfg.hidden;
  shape.output_dim = cfg.k + 2;

  MetaTrainResult result;
  result.meta.theta = init_network(shape, derive_seed(cfg.seed, 0));
  result.meta.alpha =
      Eigen::VectorXd::Constant(static_cast<Eigen::Index>(shape.flat_size()), cfg.alpha_init);
  result.meta.beta = cfg.beta;

  double best_monitor = std::numeric_limits<double>::infinity();
  int best_episode = -1;

  for (int e = 0; e < cfg.episodes; ++e) {
    auto t0 = std::chrono::steady_clock::now();
    Episode ep = sample_episode(dataset, split, cfg.k, cfg.m, cfg.n,
                                derive_seed(cfg.seed, static_cast<std::uint64_t>(e) * 2 + 1));
    std::vector<double> losses =
        outer_update(result.meta, ep, cfg.outer_mode, cfg.inner_steps_train);
    double mean = 0;
    for (double l : losses) mean += l;
    mean /= static_cast<double>(losses.size());
    if (!std::isfinite(mean)) {
      throw NumericError("non-finite validation loss at episode " + std::to_string(e) +
                         "; training diverged");
    }
    auto t1 = std::chrono::steady_clock::now();
    result.log.push_back(
        {e, mean, std::chrono::duration<double, std::milli>(t1 - t0).count()});
    result.episodes_run = e + 1;

    if (cfg.early_stop_patience > 0 && (e + 1) % cfg.monitor_stride == 0) {
      double mloss = monitor_loss(result.meta, dataset, split, cfg,
                                  derive_seed(cfg.seed, static_cast<std::uint64_t>(e) * 2 + 2));
      if (!std::isfinite(mloss)) {
        throw NumericError("non-finite monitor loss at episode " + std::to_string(e));
      }
      result.monitor.push_back({e, mloss});
      if (mloss < best_monitor) {
        best_monitor = mloss;
        best_episode = e;
      } else if (e - best_episode >= cfg.early_stop_patience) {
        result.stopped_early = true;
        break;
      }
    }
  }

  std::size_t negative = 0;
  for (Eigen::Index i = 0; i < result.meta.alpha.size(); ++i) {
    if (result.meta.alpha[i] < 0) ++negative;
  }
  result.alpha_negative_fraction =
      result.meta.alpha.size() == 0
          ? 0.0
          : static_cast<double>(negative) / static_cast<double>(result.meta.alpha.size());
  return result;
}

ParameterSet adapt(const MetaParameters& meta, const Batch& support, int steps) {
  meta.validate();
  if (steps < 1) throw PreconditionError("adapt steps must be >= 1");
  MetaParameters frozen{meta.theta, meta.alpha, meta.beta};
  ParameterSet cur = meta.theta;
  for (int s = 0; s < steps; ++s) {
    frozen.theta = cur;
    cur = inner_update(frozen, support);
  }
  return cur;
}

int predict(const ParameterSet& params, const Eigen::VectorXd& x, Prediction* pred) {
  Prediction p = forward(params, x);
  int best = 0;
  for (Eigen::Index i = 1; i < p.probs.size(); ++i) {
    if (p.probs[i] > p.probs[best]) best = static_cast<int>(i);
  }
  if (pred != nullptr) *pred = std::move(p);
  return best;
}

void save_meta_checkpoint(const std::string& path, const MetaCheckpoint& ckpt) {
  ckpt.meta.validate();
  Checkpoint raw;
  raw.header = {{"format_version", 1},
                {"kind", "meta_checkpoint"},
                {"shape", shape_to_json(ckpt.meta.theta.shape)},
                {"beta", ckpt.meta.beta},
                {"train_config", ckpt.config.to_json()},
                {"init_scheme", "glorot_uniform"},
                {"hvp_method", hvp_method()},
                {"preprocessing", ckpt.preprocessing},
                {"train_class_names", ckpt.train_class_names},
                {"test_class_names", ckpt.test_class_names},
                {"normal_label", ckpt.normal_label},
                {"dataset_hash", hash_hex(ckpt.dataset_hash)},
                {"episodes_run", ckpt.episodes_run}};
  raw.arrays.emplace_back("theta", ckpt.meta.theta.flatten());
  raw.arrays.emplace_back("alpha", ckpt.meta.alpha);
  save_checkpoint(path, raw);
}

MetaCheckpoint load_meta_checkpoint(const std::string& path) {
  Checkpoint raw = load_checkpoint(path);
  if (!raw.header.contains("kind") || raw.header["kind"].get<std::string>() != "meta_checkpoint") {
    throw FormatError(path + ": not a meta checkpoint");
  }
  MetaCheckpoint ckpt;
  NetworkShape shape = shape_from_json(raw.header.at("shape"));
  ckpt.meta.theta = ParameterSet::unflatten(shape, raw.array("theta"));
  ckpt.meta.alpha = raw.array("alpha");
  ckpt.meta.beta = raw.header.at("beta").get<double>();
  ckpt.config = TrainConfig::from_json(raw.header.at("train_config"));
  ckpt.preprocessing = raw.header.at("preprocessing");
  ckpt.train_class_names = raw.header.at("train_class_names").get<std::vector<std::string>>();
  ckpt.test_class_names = raw.header.at("test_class_names").get<std::vector<std::string>>();
  ckpt.normal_label = raw.header.at("normal_label").get<std::string>();
  ckpt.dataset_hash = std::stoull(raw.header.at("dataset_hash").get<std::string>(), nullptr, 16);
  ckpt.episodes_run = raw.header.at("episodes_run").get<int>();
  ckpt.meta.validate();
  return ckpt;
}

}  // namespace metauad
