#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "renyiflow/regularizers.hpp"
#include "renyiflow/renyi_loss.hpp"

namespace renyiflow {

enum class RegularizerKind { kNone, kPrior, kKde };

struct TrainerConfig {
  std::size_t steps = 200;
  std::size_t batch_size = 32;
  double learning_rate = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.0;  // prior potential already plays this role
  RegularizerKind regularizer = RegularizerKind::kPrior;
  std::uint64_t seed = 0;
  double init_spread = 0.1;
  PriorSpec prior{};
  KdeSpec kde{};

  void validate() const;
};

struct AdamState {
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::size_t step_count = 0;

  static AdamState zeros(std::size_t num_particles, std::size_t dim);
};

/// One decoupled-weight-decay Adam step over all particles: decay is applied
/// to the parameters before the bias-corrected moment update.
void adamw_step(std::vector<std::vector<double>>& params,
                const std::vector<std::vector<double>>& grads, AdamState& state,
                const TrainerConfig& cfg);

struct TraceRow {
  std::size_t step = 0;
  double data_loss = 0.0;
  double reg_value = 0.0;  // raw R; the objective adds R/N
  double objective = 0.0;
  double mean_ess = 0.0;
  double min_ess = 0.0;
};

struct TrainTrace {
  std::vector<TraceRow> rows;
  // Weight decay duplicates the prior potential; flagged when both are on.
  bool weight_decay_with_prior = false;
};

/// CSV: step,data_loss,reg_value,objective,mean_ess,min_ess
void write_trace_csv(std::ostream& os, const TrainTrace& trace);

/// One shared base draw from the model plus independent N(0, spread^2)
/// perturbations per particle.
ParticleEnsemble init_ensemble(const ConditionalModel& model, std::size_t num_particles,
                               double init_spread, Rng& rng);

struct TrainResult {
  ParticleEnsemble ensemble;
  TrainTrace trace;
};

/// Minibatched AdamW on J_alpha = L_data + (1/N) R. Sampling is without
/// replacement within an epoch, reshuffled per epoch, seeded from the config.
TrainResult train(const ConditionalModel& model, const Dataset& dataset,
                  ParticleEnsemble initial, const AlphaConfig& alpha_cfg,
                  const TrainerConfig& trainer_cfg);

}  // namespace renyiflow
