#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <vector>

#include "metauad/cli.hpp"
#include "metauad/common.hpp"
#include "metauad/eval.hpp"
#include "metauad/features.hpp"
#include "metauad/flow.hpp"
#include "metauad/metasgd.hpp"
#include "metauad/net.hpp"
#include "metauad/select.hpp"

namespace py = pybind11;
using namespace metauad;

namespace {

// Thin handle over the differentiable network: parameters travel as flat
// vectors, batches as (X, y) arrays, matching the checkpoint layout.
class Net {
 public:
  Net(int input_dim, std::vector<int> hidden, int output_dim) {
    shape_.input_dim = input_dim;
    shape_.hidden = std::move(hidden);
    shape_.output_dim = output_dim;
    shape_.validate();
  }

  std::size_t size() const { return shape_.flat_size(); }

  Eigen::VectorXd init(std::uint64_t seed) const { return init_network(shape_, seed).flatten(); }

  double loss(const Eigen::VectorXd& flat, const Eigen::MatrixXd& x,
              const std::vector<int>& y) const {
    return batch_loss(params(flat), batch(x, y));
  }

  Eigen::VectorXd grad_flat(const Eigen::VectorXd& flat, const Eigen::MatrixXd& x,
                            const std::vector<int>& y) const {
    return grad(params(flat), batch(x, y));
  }

  Eigen::VectorXd hvp_flat(const Eigen::VectorXd& flat, const Eigen::MatrixXd& x,
                           const std::vector<int>& y, const Eigen::VectorXd& v) const {
    return hvp(params(flat), batch(x, y), v);
  }

  Eigen::VectorXd probs(const Eigen::VectorXd& flat, const Eigen::VectorXd& x) const {
    return forward(params(flat), x).probs;
  }

  int predict_slot(const Eigen::VectorXd& flat, const Eigen::VectorXd& x) const {
    return predict(params(flat), x);
  }

 private:
  ParameterSet params(const Eigen::VectorXd& flat) const {
    return ParameterSet::unflatten(shape_, flat);
  }

  static Batch batch(const Eigen::MatrixXd& x, const std::vector<int>& y) {
    if (static_cast<std::size_t>(x.rows()) != y.size()) {
      throw PreconditionError("X rows and y length differ");
    }
    Batch b;
    b.reserve(y.size());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      b.push_back({x.row(r).transpose(), y[static_cast<std::size_t>(r)]});
    }
    return b;
  }

  NetworkShape shape_;
};

std::pair<std::vector<std::string>, std::vector<std::vector<double>>> extract_rows(
    const std::string& pcap_path, double idle_timeout_s) {
  CaptureResult capture = parse_capture(pcap_path);
  auto flows = assemble_flows(capture.packets, static_cast<std::uint64_t>(idle_timeout_s * 1e6));
  auto vectors = compute_features(flows);
  std::vector<std::vector<double>> rows;
  rows.reserve(vectors.size());
  for (const auto& fv : vectors) {
    std::vector<double> row;
    row.reserve(fv.values.size());
    for (const auto& [id, v] : fv.values) row.push_back(v);
    rows.push_back(std::move(row));
  }
  return {feature_ids(), rows};
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<std::string> full;
  full.reserve(args.size() + 1);
  full.emplace_back("metauad");
  full.insert(full.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  argv.reserve(full.size());
  for (const auto& a : full) argv.push_back(a.c_str());
  return dispatch(static_cast<int>(argv.size()), argv.data());
}

double f1_score(const std::vector<int>& preds, const std::vector<int>& truth, int n_slots,
                int slot) {
  return f1(confusion(preds, truth, n_slots), slot);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "few-shot network anomaly detection core";
  m.attr("__version__") = METAUAD_VERSION;

  py::register_exception<UsageError>(m, "UsageError");
  py::register_exception<FormatError>(m, "FormatError");
  py::register_exception<PreconditionError>(m, "PreconditionError");
  py::register_exception<NumericError>(m, "NumericError");

  m.def("run", &run_cli, py::arg("args"),
        "Run a CLI subcommand in-process; returns the exit code.");
  m.def("feature_ids", [] { return feature_ids(); },
        "Ordered ids of every extracted flow feature.");
  m.def("extract", &extract_rows, py::arg("pcap_path"), py::arg("idle_timeout_s") = 120.0,
        "Parse a pcap and return (feature_ids, rows).");
  m.def("missing_ratio", &missing_ratio, py::arg("column"));
  m.def("entropy_bits", &entropy_bits, py::arg("column"));
  m.def("f1_score", &f1_score, py::arg("preds"), py::arg("truth"), py::arg("n_slots"),
        py::arg("slot"));

  py::class_<Net>(m, "Net")
      .def(py::init<int, std::vector<int>, int>(), py::arg("input_dim"), py::arg("hidden"),
           py::arg("output_dim"))
      .def_property_readonly("size", &Net::size)
      .def("init", &Net::init, py::arg("seed"))
      .def("loss", &Net::loss, py::arg("params"), py::arg("x"), py::arg("y"))
      .def("grad", &Net::grad_flat, py::arg("params"), py::arg("x"), py::arg("y"))
      .def("hvp", &Net::hvp_flat, py::arg("params"), py::arg("x"), py::arg("y"), py::arg("v"))
      .def("probs", &Net::probs, py::arg("params"), py::arg("x"))
      .def("predict", &Net::predict_slot, py::arg("params"), py::arg("x"));
}
