#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "metauad/synth.hpp"

int main(int argc, char** argv) {
  CLI::App app{"deterministic synthetic benchmark CSV generator"};
  metauad::SynthConfig cfg;
  std::string out;
  app.add_option("--out", out, "CSV path to write")->required();
  app.add_option("--classes", cfg.n_classes, "anomaly class count");
  app.add_option("--rows-per-class", cfg.rows_per_class, "rows per anomaly class");
  app.add_option("--normal-rows", cfg.normal_rows, "normal row count");
  app.add_option("--dim", cfg.ambient_dim, "ambient feature dimension");
  app.add_option("--circles", cfg.n_circles, "concentric circles carrying the clusters");
  app.add_option("--radius-base", cfg.radius_base, "innermost circle radius");
  app.add_option("--radius-step", cfg.radius_step, "radius increment per circle");
  app.add_option("--cluster-sigma", cfg.cluster_sigma, "anomaly cluster spread in the latent plane");
  app.add_option("--normal-sigma", cfg.normal_sigma, "normal-traffic spread in the latent plane");
  app.add_option("--noise-sigma", cfg.noise_sigma, "ambient isotropic noise");
  app.add_option("--seed", cfg.seed, "RNG seed")->required();
  app.add_flag("--with-junk", cfg.with_junk, "append constant + mostly-missing columns");
  CLI11_PARSE(app, argc, argv);

  try {
    metauad::write_synth_csv(out, cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  std::cout << "wrote " << out << "\n";
  return 0;
}
