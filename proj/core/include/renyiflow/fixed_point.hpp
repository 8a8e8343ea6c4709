#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "renyiflow/models.hpp"

namespace renyiflow {

struct DiscretePosterior {
  std::vector<double> probs;

  void validate() const;  // non-negative, sums to 1 within 1e-12
};

struct FixedPointConfig {
  double damping = 0.5;       // in (0, 1]
  double tol = 1e-10;         // max-abs probability change
  std::size_t max_iters = 100000;

  void validate() const;
};

struct FixedPointResult {
  DiscretePosterior posterior;
  std::size_t iterations = 0;
  bool converged = false;
  double residual = 0.0;  // max-abs gap of the undamped self-consistency map
};

/// Damped iteration of q_new(theta) ~ pi_0(theta) exp((1/(lambda alpha))
/// sum_i w_i(theta; q)), normalized with a max-shifted exponent.
FixedPointResult solve_self_consistent(const DiscreteTable& table, double alpha, double lambda,
                                       std::span<const double> prior,
                                       const FixedPointConfig& cfg,
                                       std::optional<std::vector<double>> init = std::nullopt);

/// q(theta) ~ pi_0(theta) exp((1/lambda) sum_i log p_theta(z_i)): the
/// alpha -> 0 limit.
DiscretePosterior gibbs_posterior(const DiscreteTable& table, double lambda,
                                  std::span<const double> prior);

struct SweepRow {
  double alpha = 0.0;
  std::vector<double> probs;                    // ordered as the table labels
  double ratio_specialist_generalist = 0.0;     // q(a) / q(g)
  bool converged = false;
};

struct TransitionSweep {
  std::vector<SweepRow> rows;
  double analytic_crossing = 0.0;       // root of h^a + eps^a = 2 m^a
  bool analytic_crossing_found = false;
  double solver_crossing = 0.0;         // bisection on sign(q(a) - q(g))
  bool solver_crossing_found = false;
};

/// Root of h^alpha + eps^alpha - 2 m^alpha on [1e-4, 1], bisection to 1e-6.
std::optional<double> example1_analytic_crossing(double h, double eps, double m);

/// Solves the fixed point over an alpha grid for the generalist/specialist
/// table under a uniform prior, locating the specialist takeover.
TransitionSweep example1_transition_sweep(double h, double eps, double m, double lambda,
                                          std::span<const double> alphas,
                                          const FixedPointConfig& cfg);

}  // namespace renyiflow
