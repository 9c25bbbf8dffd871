#include "metauad/synth.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <vector>

#include "metauad/common.hpp"

namespace metauad {

namespace {

constexpr int kLatentDim = 2;
constexpr double kTau = 6.283185307179586476925286766559;

std::string class_label(int c) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "ANOMALY_%02d", c);
  return buf;
}

}  // namespace

CsvTable synth_table(const SynthConfig& config) {
  if (config.n_classes < 1 || config.rows_per_class < 1 || config.normal_rows < 1 ||
      config.ambient_dim < kLatentDim || config.n_circles < 1) {
    throw PreconditionError("degenerate synthetic benchmark configuration");
  }
  Rng rng(config.seed);

  // Fixed lift from the latent plane into the ambient space.
  std::vector<std::vector<double>> lift(static_cast<std::size_t>(config.ambient_dim),
                                        std::vector<double>(kLatentDim));
  for (auto& row : lift) {
    for (double& v : row) v = rng.normal() / std::sqrt(static_cast<double>(kLatentDim));
  }

  const int per_circle = (config.n_classes + config.n_circles - 1) / config.n_circles;

  CsvTable table;
  table.has_labels = true;
  for (int f = 0; f < config.ambient_dim; ++f) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "F%02d", f);
    table.feature_ids.emplace_back(buf);
  }
  if (config.with_junk) {
    table.feature_ids.emplace_back("CONST_COL");
    table.feature_ids.emplace_back("SPOTTY_COL");
  }

  auto emit_row = [&](double z0, double z1, const std::string& label) {
    std::vector<double> row;
    row.reserve(table.feature_ids.size());
    for (int f = 0; f < config.ambient_dim; ++f) {
      double v = lift[static_cast<std::size_t>(f)][0] * z0 +
                 lift[static_cast<std::size_t>(f)][1] * z1 + config.noise_sigma * rng.normal();
      row.push_back(v);
    }
    if (config.with_junk) {
      row.push_back(1.0);
      double miss = rng.uniform01();
      row.push_back(miss < 0.7 ? std::numeric_limits<double>::quiet_NaN() : rng.uniform01());
    }
    table.rows.push_back(std::move(row));
    table.labels.push_back(label);
  };

  for (int c = 0; c < config.n_classes; ++c) {
    int circle = c % config.n_circles;
    int spoke = c / config.n_circles;
    double radius = config.radius_base + config.radius_step * circle;
    double angle = kTau * spoke / per_circle + 0.3 * circle;
    double cx = radius * std::cos(angle);
    double cy = radius * std::sin(angle);
    std::string label = class_label(c);
    for (int r = 0; r < config.rows_per_class; ++r) {
      emit_row(cx + config.cluster_sigma * rng.normal(), cy + config.cluster_sigma * rng.normal(),
               label);
    }
  }
  for (int r = 0; r < config.normal_rows; ++r) {
    emit_row(config.normal_sigma * rng.normal(), config.normal_sigma * rng.normal(), "BENIGN");
  }
  return table;
}

void write_synth_csv(const std::string& path, const SynthConfig& config) {
  CsvTable table = synth_table(config);
  write_csv(path, table.feature_ids, table.rows, &table.labels);
}

}  // namespace metauad
