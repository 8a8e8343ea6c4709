#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "renyiflow/models.hpp"

namespace renyiflow {

/// The empirical measure Q^M = (1/M) sum_i delta_{theta_i}: M parameter
/// vectors sharing one model family.
struct ParticleEnsemble {
  const ConditionalModel* model = nullptr;
  std::vector<std::vector<double>> params;

  std::size_t size() const { return params.size(); }
  std::size_t dim() const { return params.empty() ? 0 : params[0].size(); }
  void validate() const;
};

struct AlphaConfig {
  double alpha = 0.8;   // in [0, 1]; 0 selects the analytic limit branch
  double lambda = 1.0;  // regularization weight, >= 0
  std::size_t n = 1;    // training-set size scaling the data term

  void validate() const;
};

/// Per-(particle, example) soft-routing weights. Each column sums to 1; the
/// ESS of a column is 1 / sum_i w_i^2.
struct ResponsibilityMatrix {
  std::size_t num_particles = 0;
  std::size_t num_examples = 0;
  std::vector<double> weights;  // row-major M x B
  std::vector<double> ess;      // length B

  double weight(std::size_t i, std::size_t b) const { return weights[i * num_examples + b]; }
  std::vector<double> column(std::size_t b) const;
  std::size_t argmax_particle(std::size_t b) const;  // ties -> lowest index
};

/// s_{i,b} = log p_{theta_i}(y_b | x_b), row-major M x B. Entries are filled
/// independently (parallel-safe) so results do not depend on worker count.
std::vector<double> score_matrix(const ParticleEnsemble& ensemble,
                                 std::span<const DataPoint> batch);

double per_example_loss_from_scores(double alpha, std::span<const double> scores);
double per_example_loss(const ParticleEnsemble& ensemble, const AlphaConfig& cfg,
                        const DataPoint& point);

ResponsibilityMatrix responsibilities_from_scores(double alpha, std::span<const double> scores,
                                                  std::size_t num_particles,
                                                  std::size_t num_examples);
ResponsibilityMatrix responsibilities(const ParticleEnsemble& ensemble, const AlphaConfig& cfg,
                                      std::span<const DataPoint> batch);

/// 1 / sum_i w_i^2 for one responsibility column.
double ess(std::span<const double> weights);

/// (N/B) * sum_b per-example loss.
double minibatch_data_loss(const ParticleEnsemble& ensemble, const AlphaConfig& cfg,
                           std::span<const DataPoint> batch);

/// g_i = -(N/B) * sum_b w_{i,b} * grad log p_{theta_i}(y_b | x_b).
std::vector<std::vector<double>> particle_gradients(const ParticleEnsemble& ensemble,
                                                    const AlphaConfig& cfg,
                                                    std::span<const DataPoint> batch);

struct DvIdentity {
  double lhs = 0.0;
  double rhs = 0.0;
  double gap = 0.0;
};

/// Donsker-Varadhan representation evaluated at its optimizer: the loss must
/// equal the tilted data term plus the scaled KL of the tilt.
DvIdentity dv_identity_check(const ParticleEnsemble& ensemble, const AlphaConfig& cfg,
                             const DataPoint& point);

struct EntropyDecomposition {
  double l_alpha = 0.0;
  double l_one = 0.0;
  double renyi_entropy = 0.0;
  double gap = 0.0;
};

/// l_alpha = l_1 - ((1-alpha)/alpha) * H_alpha(w; Q) with w the alpha=1
/// responsibilities. Defined only for 0 < alpha < 1.
EntropyDecomposition entropy_decomposition_check(const ParticleEnsemble& ensemble,
                                                 const DataPoint& point, double alpha);

struct VarianceBound {
  double gap = 0.0;
  double bound = 0.0;
  bool holds = false;
};

/// l_0 - l_alpha >= Var_Q(p^alpha) / (2 alpha M_{x,y}^{2 alpha}), Var over the
/// uniform particle measure.
VarianceBound variance_bound_check(const ParticleEnsemble& ensemble, const DataPoint& point,
                                   double alpha);

struct ShieldingRecord {
  double grad_norm = 0.0;
  double bound = 0.0;
  bool holds = false;
};

/// ||grad_{theta_i} l_alpha|| <= exp(-alpha [L_i - L_min]) ||grad L_i|| per
/// particle, single point, unscaled.
std::vector<ShieldingRecord> shielding_check(const ParticleEnsemble& ensemble,
                                             const AlphaConfig& cfg, const DataPoint& point);

}  // namespace renyiflow
