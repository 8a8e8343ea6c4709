#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "renyiflow/renyi_loss.hpp"

namespace renyiflow {

/// Gaussian prior N(0, tau^2 I).
struct PriorSpec {
  double tau = 1.0;

  void validate() const;
  double log_density(std::span<const double> theta) const;
  std::vector<double> grad_log_density(std::span<const double> theta) const;
};

/// Kernel bandwidth: a fixed epsilon, or the median heuristic when unset.
struct KdeSpec {
  std::optional<double> bandwidth;  // nullopt -> median heuristic

  static KdeSpec median_heuristic() { return KdeSpec{}; }
  static KdeSpec fixed(double epsilon);
};

struct RegularizerResult {
  double value = 0.0;
  std::vector<std::vector<double>> gradients;  // one per particle
};

/// Prior-potential surrogate: (lambda / (2 M tau^2)) sum_i ||theta_i||^2,
/// prior normalization constant dropped. Gradient on theta_i is
/// (lambda / (M tau^2)) theta_i.
RegularizerResult prior_potential(const ParticleEnsemble& ensemble, const PriorSpec& prior,
                                  double lambda);

struct BandwidthResolution {
  double epsilon = 0.0;
  bool used_fallback = false;  // coincident particles under the heuristic
};

/// Median pairwise particle distance divided by sqrt(2 log(M+1)). Needs at
/// least two particles; coincident particles fall back to epsilon = 1e-2.
BandwidthResolution resolve_bandwidth(const ParticleEnsemble& ensemble);

struct KdeResult {
  double value = 0.0;
  std::vector<std::vector<double>> gradients;
  double bandwidth = 0.0;
  bool bandwidth_fallback = false;
};

/// Smoothed-KL surrogate evaluated at the particles:
/// (lambda/M) sum_i [log q_M^eps(theta_i) - log pi_0(theta_i)] with an
/// isotropic Gaussian kernel. Gradients carry both the kernel repulsion and
/// the prior pull.
KdeResult kde_kl(const ParticleEnsemble& ensemble, const PriorSpec& prior, const KdeSpec& kde,
                 double lambda);

}  // namespace renyiflow
