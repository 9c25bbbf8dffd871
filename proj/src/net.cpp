#include "metauad/net.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "metauad/common.hpp"

namespace metauad {

std::pair<int, int> NetworkShape::layer_dims(int layer) const {
  int fan_in = layer == 0 ? input_dim : hidden[static_cast<std::size_t>(layer - 1)];
  int fan_out = layer == static_cast<int>(hidden.size())
                    ? output_dim
                    : hidden[static_cast<std::size_t>(layer)];
  return {fan_in, fan_out};
}

std::size_t NetworkShape::flat_size() const {
  std::size_t n = 0;
  for (int l = 0; l < layer_count(); ++l) {
    auto [fi, fo] = layer_dims(l);
    n += static_cast<std::size_t>(fi + 1) * static_cast<std::size_t>(fo);
  }
  return n;
}

void NetworkShape::validate() const {
  if (input_dim <= 0) throw PreconditionError("network input_dim must be positive");
  if (output_dim < 2) throw PreconditionError("network output_dim must be >= 2");
  for (int h : hidden) {
    if (h <= 0) throw PreconditionError("hidden layer sizes must be positive");
  }
}

Eigen::VectorXd ParameterSet::flatten() const {
  Eigen::VectorXd flat(static_cast<Eigen::Index>(shape.flat_size()));
  Eigen::Index pos = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    const auto& w = weights[l];
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) flat[pos++] = w(r, c);
    }
    const auto& b = biases[l];
    for (Eigen::Index r = 0; r < b.size(); ++r) flat[pos++] = b[r];
  }
  return flat;
}

ParameterSet ParameterSet::unflatten(const NetworkShape& shape, const Eigen::VectorXd& flat) {
  if (static_cast<std::size_t>(flat.size()) != shape.flat_size()) {
    throw PreconditionError("flat parameter vector length mismatch");
  }
  ParameterSet p;
  p.shape = shape;
  Eigen::Index pos = 0;
  for (int l = 0; l < shape.layer_count(); ++l) {
    auto [fi, fo] = shape.layer_dims(l);
    Eigen::MatrixXd w(fo, fi);
    for (Eigen::Index r = 0; r < fo; ++r) {
      for (Eigen::Index c = 0; c < fi; ++c) w(r, c) = flat[pos++];
    }
    Eigen::VectorXd b(fo);
    for (Eigen::Index r = 0; r < fo; ++r) b[r] = flat[pos++];
    p.weights.push_back(std::move(w));
    p.biases.push_back(std::move(b));
  }
  return p;
}

ParameterSet ParameterSet::zeros(const NetworkShape& shape) {
  ParameterSet p;
  p.shape = shape;
  for (int l = 0; l < shape.layer_count(); ++l) {
    auto [fi, fo] = shape.layer_dims(l);
    p.weights.emplace_back(Eigen::MatrixXd::Zero(fo, fi));
    p.biases.emplace_back(Eigen::VectorXd::Zero(fo));
  }
  return p;
}

ParameterSet init_network(const NetworkShape& shape, std::uint64_t seed) {
  shape.validate();
  ParameterSet p;
  p.shape = shape;
  Rng rng(seed);
  for (int l = 0; l < shape.layer_count(); ++l) {
    auto [fi, fo] = shape.layer_dims(l);
    double limit = std::sqrt(6.0 / static_cast<double>(fi + fo));
    Eigen::MatrixXd w(fo, fi);
    for (Eigen::Index r = 0; r < fo; ++r) {
      for (Eigen::Index c = 0; c < fi; ++c) w(r, c) = rng.uniform(-limit, limit);
    }
    p.weights.push_back(std::move(w));
    p.biases.emplace_back(Eigen::VectorXd::Zero(fo));
  }
  return p;
}

namespace {

// Row-wise softmax with max-subtraction.
Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& z) {
  Eigen::MatrixXd p(z.rows(), z.cols());
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    double m = z.row(r).maxCoeff();
    Eigen::ArrayXd e = (z.row(r).array() - m).exp();
    p.row(r) = (e / e.sum()).matrix();
  }
  return p;
}

struct ForwardPass {
  std::vector<Eigen::MatrixXd> acts;  // acts[0] = X; acts[l+1] = relu(Z_l) for hidden layers
  std::vector<Eigen::MatrixXd> zs;    // pre-activations, one per layer
  Eigen::MatrixXd probs;              // n x output_dim
};

Eigen::MatrixXd batch_matrix(const ParameterSet& params, const Batch& batch) {
  if (batch.empty()) throw PreconditionError("batch must be non-empty");
  const Eigen::Index in = params.shape.input_dim;
  Eigen::MatrixXd x(static_cast<Eigen::Index>(batch.size()), in);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch[i].x.size() != in) {
      throw PreconditionError("input dimension mismatch: got " + std::to_string(batch[i].x.size()) +
                              ", expected " + std::to_string(in));
    }
    x.row(static_cast<Eigen::Index>(i)) = batch[i].x.transpose();
  }
  return x;
}

ForwardPass run_forward(const ParameterSet& params, const Eigen::MatrixXd& x) {
  ForwardPass fp;
  int layers = params.shape.layer_count();
  fp.acts.resize(static_cast<std::size_t>(layers));
  fp.zs.resize(static_cast<std::size_t>(layers));
  fp.acts[0] = x;
  for (int l = 0; l < layers; ++l) {
    const std::size_t li = static_cast<std::size_t>(l);
    Eigen::MatrixXd z = fp.acts[li] * params.weights[li].transpose();
    z.rowwise() += params.biases[li].transpose();
    fp.zs[li] = z;
    if (l + 1 < layers) {
      fp.acts[li + 1] = z.cwiseMax(0.0);
    } else {
      fp.probs = softmax_rows(z);
    }
  }
  return fp;
}

Eigen::MatrixXd onehot_matrix(const Batch& batch, int out_dim) {
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(batch.size()), out_dim);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    int lab = batch[i].label;
    if (lab < 0 || lab >= out_dim) {
      throw PreconditionError("label slot " + std::to_string(lab) + " outside 0.." +
                              std::to_string(out_dim - 1));
    }
    y(static_cast<Eigen::Index>(i), lab) = 1.0;
  }
  return y;
}

double loss_from_probs(const Eigen::MatrixXd& probs, const Batch& batch) {
  double loss = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    double p = probs(static_cast<Eigen::Index>(i), batch[i].label);
    loss += -std::log(std::max(p, kProbClamp));
  }
  return loss;
}

// dL/dZ at the softmax layer; rows whose true-class probability sits under
// the clamp have zero local derivative (the clamped loss is flat there).
Eigen::MatrixXd output_delta(const Eigen::MatrixXd& probs, const Eigen::MatrixXd& y,
                             const Batch& batch, std::vector<bool>* clamped_out) {
  Eigen::MatrixXd d = probs - y;
  if (clamped_out != nullptr) clamped_out->assign(batch.size(), false);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (probs(static_cast<Eigen::Index>(i), batch[i].label) < kProbClamp) {
      d.row(static_cast<Eigen::Index>(i)).setZero();
      if (clamped_out != nullptr) (*clamped_out)[i] = true;
    }
  }
  return d;
}

Eigen::VectorXd flatten_grads(const NetworkShape& shape, const std::vector<Eigen::MatrixXd>& gw,
                              const std::vector<Eigen::VectorXd>& gb) {
  ParameterSet tmp;
  tmp.shape = shape;
  tmp.weights = gw;
  tmp.biases = gb;
  return tmp.flatten();
}

}  // namespace

Prediction forward(const ParameterSet& params, const Eigen::VectorXd& x) {
  if (x.size() != params.shape.input_dim) {
    throw PreconditionError("input dimension mismatch: got " + std::to_string(x.size()) +
                            ", expected " + std::to_string(params.shape.input_dim));
  }
  ForwardPass fp = run_forward(params, x.transpose());
  Prediction pred;
  pred.probs = fp.probs.row(0).transpose();
  return pred;
}

double cross_entropy(const Prediction& pred, const Eigen::VectorXd& y_onehot) {
  if (y_onehot.size() != pred.probs.size()) {
    throw PreconditionError("one-hot length does not match prediction length");
  }
  int hot = -1;
  for (Eigen::Index i = 0; i < y_onehot.size(); ++i) {
    double v = y_onehot[i];
    if (v == 1.0) {
      if (hot >= 0) throw PreconditionError("y is not one-hot: multiple ones");
      hot = static_cast<int>(i);
    } else if (v != 0.0) {
      throw PreconditionError("y is not one-hot: entry " + std::to_string(v));
    }
  }
  if (hot < 0) throw PreconditionError("y is not one-hot: no one set");
  return -std::log(std::max(pred.probs[hot], kProbClamp));
}

double batch_loss(const ParameterSet& params, const Batch& batch) {
  Eigen::MatrixXd x = batch_matrix(params, batch);
  ForwardPass fp = run_forward(params, x);
  onehot_matrix(batch, params.shape.output_dim);  // validates labels
  return loss_from_probs(fp.probs, batch);
}

Eigen::VectorXd grad(const ParameterSet& params, const Batch& batch) {
  Eigen::MatrixXd x = batch_matrix(params, batch);
  ForwardPass fp = run_forward(params, x);
  Eigen::MatrixXd y = onehot_matrix(batch, params.shape.output_dim);

  int layers = params.shape.layer_count();
  std::vector<Eigen::MatrixXd> gw(static_cast<std::size_t>(layers));
  std::vector<Eigen::VectorXd> gb(static_cast<std::size_t>(layers));

  Eigen::MatrixXd delta = output_delta(fp.probs, y, batch, nullptr);
  for (int l = layers - 1; l >= 0; --l) {
    const std::size_t li = static_cast<std::size_t>(l);
    gw[li] = delta.transpose() * fp.acts[li];
    gb[li] = delta.colwise().sum().transpose();
    if (l > 0) {
      Eigen::MatrixXd da = delta * params.weights[li];
      delta = da.cwiseProduct((fp.zs[li - 1].array() > 0.0).cast<double>().matrix());
    }
  }
  return flatten_grads(params.shape, gw, gb);
}

Eigen::VectorXd hvp(const ParameterSet& params, const Batch& batch, const Eigen::VectorXd& vec) {
  if (static_cast<std::size_t>(vec.size()) != params.shape.flat_size()) {
    throw PreconditionError("hvp direction length mismatch");
  }
  ParameterSet v = ParameterSet::unflatten(params.shape, vec);

  Eigen::MatrixXd x = batch_matrix(params, batch);
  ForwardPass fp = run_forward(params, x);
  Eigen::MatrixXd y = onehot_matrix(batch, params.shape.output_dim);

  int layers = params.shape.layer_count();

  // forward tangents along vec
  std::vector<Eigen::MatrixXd> tacts(static_cast<std::size_t>(layers));
  std::vector<Eigen::MatrixXd> tzs(static_cast<std::size_t>(layers));
  tacts[0] = Eigen::MatrixXd::Zero(x.rows(), x.cols());
  for (int l = 0; l < layers; ++l) {
    const std::size_t li = static_cast<std::size_t>(l);
    Eigen::MatrixXd tz = tacts[li] * params.weights[li].transpose() + fp.acts[li] * v.weights[li].transpose();
    tz.rowwise() += v.biases[li].transpose();
    tzs[li] = tz;
    if (l + 1 < layers) {
      tacts[li + 1] = tz.cwiseProduct((fp.zs[li].array() > 0.0).cast<double>().matrix());
    }
  }

  // softmax tangent: tp = p .* (tz - rowdot(p, tz))
  const Eigen::MatrixXd& p = fp.probs;
  const Eigen::MatrixXd& tz_out = tzs[static_cast<std::size_t>(layers - 1)];
  Eigen::VectorXd rowdot = (p.cwiseProduct(tz_out)).rowwise().sum();
  Eigen::MatrixXd tp = p.cwiseProduct(tz_out - rowdot * Eigen::RowVectorXd::Ones(p.cols()));

  std::vector<bool> clamped;
  Eigen::MatrixXd delta = output_delta(p, y, batch, &clamped);
  Eigen::MatrixXd tdelta = tp;
  for (std::size_t i = 0; i < clamped.size(); ++i) {
    if (clamped[i]) tdelta.row(static_cast<Eigen::Index>(i)).setZero();
  }

  std::vector<Eigen::MatrixXd> hw(static_cast<std::size_t>(layers));
  std::vector<Eigen::VectorXd> hb(static_cast<std::size_t>(layers));
  for (int l = layers - 1; l >= 0; --l) {
    const std::size_t li = static_cast<std::size_t>(l);
    hw[li] = tdelta.transpose() * fp.acts[li] + delta.transpose() * tacts[li];
    hb[li] = tdelta.colwise().sum().transpose();
    if (l > 0) {
      Eigen::MatrixXd mask = (fp.zs[li - 1].array() > 0.0).cast<double>().matrix();
      Eigen::MatrixXd tda = tdelta * params.weights[li] + delta * v.weights[li];
      tdelta = tda.cwiseProduct(mask);
      delta = (delta * params.weights[li]).cwiseProduct(mask);
    }
  }
  return flatten_grads(params.shape, hw, hb);
}

const char* hvp_method() { return "forward_over_reverse"; }

const Eigen::VectorXd& Checkpoint::array(const std::string& name) const {
  for (const auto& [n, a] : arrays) {
    if (n == name) return a;
  }
  throw PreconditionError("checkpoint has no array named '" + name + "'");
}

bool Checkpoint::has_array(const std::string& name) const {
  for (const auto& [n, a] : arrays) {
    if (n == name) return true;
  }
  return false;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  nlohmann::json header = ckpt.header;
  header["arrays"] = nlohmann::json::array();
  for (const auto& [name, arr] : ckpt.arrays) {
    header["arrays"].push_back({{"name", name}, {"len", arr.size()}});
  }
  std::string hs = header.dump();

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write file: " + path);
  std::uint32_t hlen = static_cast<std::uint32_t>(hs.size());
  unsigned char lenb[4] = {static_cast<unsigned char>(hlen & 0xFF),
                           static_cast<unsigned char>((hlen >> 8) & 0xFF),
                           static_cast<unsigned char>((hlen >> 16) & 0xFF),
                           static_cast<unsigned char>((hlen >> 24) & 0xFF)};
  f.write(reinterpret_cast<const char*>(lenb), 4);
  f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& [name, arr] : ckpt.arrays) {
    for (Eigen::Index i = 0; i < arr.size(); ++i) {
      double d = arr[i];
      std::uint64_t bits;
      std::memcpy(&bits, &d, 8);
      unsigned char b[8];
      for (int k = 0; k < 8; ++k) b[k] = static_cast<unsigned char>((bits >> (8 * k)) & 0xFF);
      f.write(reinterpret_cast<const char*>(b), 8);
    }
  }
  if (!f) throw IoError("write failure: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::string bytes = read_text_file(path);
  if (bytes.size() < 4) throw FormatError(path + ": truncated checkpoint");
  std::uint32_t hlen = static_cast<std::uint8_t>(bytes[0]) |
                       (static_cast<std::uint8_t>(bytes[1]) << 8) |
                       (static_cast<std::uint8_t>(bytes[2]) << 16) |
                       (static_cast<std::uint8_t>(bytes[3]) << 24);
  if (bytes.size() < 4 + static_cast<std::size_t>(hlen)) {
    throw FormatError(path + ": truncated checkpoint header");
  }
  Checkpoint ckpt;
  try {
    ckpt.header = nlohmann::json::parse(bytes.substr(4, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": bad checkpoint header: " + e.what());
  }
  if (!ckpt.header.contains("format_version") || ckpt.header["format_version"].get<int>() != 1) {
    throw FormatError(path + ": unknown checkpoint format version");
  }
  std::size_t pos = 4 + hlen;
  for (const auto& entry : ckpt.header["arrays"]) {
    std::string name = entry["name"].get<std::string>();
    std::size_t len = entry["len"].get<std::size_t>();
    if (bytes.size() < pos + len * 8) throw FormatError(path + ": truncated array '" + name + "'");
    Eigen::VectorXd arr(static_cast<Eigen::Index>(len));
    for (std::size_t i = 0; i < len; ++i) {
      std::uint64_t bits = 0;
      for (int k = 7; k >= 0; --k) {
        bits = (bits << 8) | static_cast<std::uint8_t>(bytes[pos + i * 8 + static_cast<std::size_t>(k)]);
      }
      double d;
      std::memcpy(&d, &bits, 8);
      arr[static_cast<Eigen::Index>(i)] = d;
    }
    pos += len * 8;
    ckpt.arrays.emplace_back(std::move(name), std::move(arr));
  }
  return ckpt;
}

nlohmann::json shape_to_json(const NetworkShape& shape) {
  return {{"input_dim", shape.input_dim}, {"hidden", shape.hidden}, {"output_dim", shape.output_dim}};
}

NetworkShape shape_from_json(const nlohmann::json& j) {
  NetworkShape s;
  s.input_dim = j.at("input_dim").get<int>();
  s.hidden = j.at("hidden").get<std::vector<int>>();
  s.output_dim = j.at("output_dim").get<int>();
  return s;
}

}  // namespace metauad
