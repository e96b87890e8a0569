#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hwsf/sim.hpp"
#include "hwsf/types.hpp"

namespace hwsf {

// Scalar FQI hyperparameters as they appear in the experiment config; the
// runtime FqiConfig (grid, action box) is assembled from these plus the
// dataset and environment.
struct FqiSection {
  double gamma = 0.99;
  double alpha = 0.5;
  double beta = 0.2;
  double tau = 1e-2;
  double epsilon = 1e-3;
  double d_radius = 1.0;
  double theta_tol = 1e-6;
  int max_iters = 400;
  int grid_per_dim = 7;
  int grid_cap = 2401;
  std::uint64_t grid_seed = 1234;
  int poly_degree = 2;
  int rbf_count = 20;
  double rbf_width = 2.0;
};

struct BoundsSection {
  int instances = 100;
  std::uint64_t seed = 7;
  double tol = 1e-9;
  double d_radius = 1.0;
};

struct CollectSection {
  int rollouts = 10;
  double explore_noise = 0.5;
};

struct SimulateSection {
  std::vector<std::string> filters{"euclidean", "weighted", "qmax"};
  std::string w_source = "analytic";
  std::string model_file;
};

struct BenchSection {
  int scenarios = 5;
};

struct ExperimentConfig {
  EnvConfig env = EnvConfig::defaults();
  FqiSection fqi;
  BoundsSection bounds;
  CollectSection collect;
  SimulateSection simulate;
  BenchSection bench;
  std::string output_dir = "out";
  std::uint64_t seed = 42;

  void validate() const;
};

// Strict parse: unknown keys anywhere raise ConfigError.
ExperimentConfig config_from_json_text(const std::string& text);
ExperimentConfig load_config_file(const std::string& path);

// Dotted-path override, e.g. "env.dt=0.05" or "fqi.alpha=0". The value is
// parsed as JSON when possible and as a string otherwise.
void apply_override(std::string& json_text, const std::string& assignment);

}  // namespace hwsf
