#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <json.hpp>

#include "renyiflow/trainer.hpp"

namespace renyiflow::cli {

struct ModelSpec {
  std::string type;  // linear_gaussian_two_regime | lora | tiny_mlp | discrete_table
  double sigma = 0.5;
  // lora
  std::size_t d_in = 2;
  std::size_t d_out = 1;
  std::size_t rank = 1;
  double base_scale = 0.0;
  // tiny_mlp
  std::size_t hidden = 8;
  // discrete_table
  double h = 0.9;
  double eps = 0.01;
  double m = 0.3;
};

struct DatasetSpec {
  std::string type;  // two_regime | conflict | poisoned | preference_conflict | csv | preference_csv
  std::size_t n = 1000;
  double beta = 1.0;
  double a = 2.0;
  double epsilon = 0.2;
  double sigma = 0.5;
  // conflict
  double slope = 2.0;
  // poisoned
  double poison_fraction = 0.1;
  double shift = 5.0;
  // preference_conflict
  double scale = 1.0;
  bool conflicting = true;
  // csv variants
  std::string path;
};

struct RunConfig {
  double alpha = 0.8;
  double lambda = 1.0;
  std::size_t num_particles = 4;
  double prior_tau = 1.0;
  std::string regularizer = "prior";  // prior | kde | none
  std::optional<double> kde_bandwidth;  // absent -> median heuristic
  double learning_rate = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.0;
  std::size_t batch_size = 32;
  std::size_t steps = 200;
  std::uint64_t seed = 0;
  double init_spread = 0.1;
  double beta_dpo = 0.1;
  std::optional<ModelSpec> model;
  std::optional<DatasetSpec> dataset;

  AlphaConfig alpha_config(std::size_t dataset_size) const;
  TrainerConfig trainer_config() const;
  RegularizerKind regularizer_kind() const;
};

/// Parses a config file, rejecting unknown keys with their full path.
RunConfig load_config(const std::string& path);

/// The fully resolved configuration (defaults applied, overrides folded in).
nlohmann::json config_to_json(const RunConfig& cfg);

}  // namespace renyiflow::cli
