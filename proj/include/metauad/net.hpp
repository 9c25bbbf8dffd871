#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace metauad {

// Fully connected ReLU network with a softmax head. All math is double
// precision; forward/grad/hvp are pure functions of their arguments.
struct NetworkShape {
  int input_dim = 0;
  std::vector<int> hidden{256, 128, 128};
  int output_dim = 0;

  int layer_count() const { return static_cast<int>(hidden.size()) + 1; }
  std::pair<int, int> layer_dims(int layer) const;  // (fan_in, fan_out)
  std::size_t flat_size() const;
  void validate() const;
  bool operator==(const NetworkShape&) const = default;
};

struct ParameterSet {
  NetworkShape shape;
  std::vector<Eigen::MatrixXd> weights;  // fan_out x fan_in
  std::vector<Eigen::VectorXd> biases;

  Eigen::VectorXd flatten() const;
  static ParameterSet unflatten(const NetworkShape& shape, const Eigen::VectorXd& flat);
  static ParameterSet zeros(const NetworkShape& shape);
};

struct Prediction {
  Eigen::VectorXd probs;
};

struct Sample {
  Eigen::VectorXd x;
  int label = 0;  // output slot index
};
using Batch = std::vector<Sample>;

constexpr double kProbClamp = 1e-12;

// Glorot-uniform weights, zero biases; identical output for identical seed.
ParameterSet init_network(const NetworkShape& shape, std::uint64_t seed);

Prediction forward(const ParameterSet& params, const Eigen::VectorXd& x);

// Natural-log cross entropy with probabilities clamped at kProbClamp;
// y must be one-hot.
double cross_entropy(const Prediction& pred, const Eigen::VectorXd& y_onehot);

// Sum (not mean) of per-sample cross entropies.
double batch_loss(const ParameterSet& params, const Batch& batch);

// Exact reverse-mode gradient of batch_loss, flattened.
Eigen::VectorXd grad(const ParameterSet& params, const Batch& batch);

// Hessian-vector product of batch_loss via forward-over-reverse tangents.
Eigen::VectorXd hvp(const ParameterSet& params, const Batch& batch, const Eigen::VectorXd& vec);

const char* hvp_method();  // recorded in run manifests

// Checkpoint container: 4-byte little-endian header length, JSON header,
// then the named arrays as raw little-endian doubles in header order.
struct Checkpoint {
  nlohmann::json header;
  std::vector<std::pair<std::string, Eigen::VectorXd>> arrays;

  const Eigen::VectorXd& array(const std::string& name) const;
  bool has_array(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

nlohmann::json shape_to_json(const NetworkShape& shape);
NetworkShape shape_from_json(const nlohmann::json& j);

}  // namespace metauad
