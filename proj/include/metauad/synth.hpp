#pragma once

#include <cstdint>
#include <string>

#include "metauad/csv.hpp"

namespace metauad {

// Deterministic benchmark generator: anomaly classes are Gaussian clusters
// placed on concentric circles in a 2-D latent space, normals sit at the
// origin, and everything is lifted through a fixed random linear map into
// the ambient dimension (plus isotropic noise). Adjacent clusters overlap
// enough that few-shot adaptation has real headroom.
struct SynthConfig {
  int n_classes = 42;
  int rows_per_class = 60;
  int normal_rows = 3000;
  int ambient_dim = 20;
  int n_circles = 5;
  double radius_base = 2.5;
  double radius_step = 0.7;
  double cluster_sigma = 0.6;
  double normal_sigma = 1.0;
  double noise_sigma = 0.05;
  bool with_junk = false;  // append one constant and one mostly-missing column
  std::uint64_t seed = 0;
};

CsvTable synth_table(const SynthConfig& config);

void write_synth_csv(const std::string& path, const SynthConfig& config);

}  // namespace metauad
