#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "renyiflow/models.hpp"
#include "renyiflow/regularizers.hpp"

namespace renyiflow {

struct StabilityReport {
  DenseMatrix v_hat;
  DenseMatrix j_hat;
  double alpha_critical = 0.0;
  std::vector<double> principal_direction;
  std::size_t n_samples = 0;
  std::vector<double> theta_eval;
};

/// Sample curvature and score-moment matrices at theta:
/// V_hat = (1/N) sum_i hessian_nll, J_hat = (1/N) sum_i grad grad^T, both
/// symmetrized. Models without analytic Hessians fall back to central
/// differences of the gradient at step 1e-4.
std::pair<DenseMatrix, DenseMatrix> empirical_v_j(const ConditionalModel& model,
                                                  std::span<const double> theta,
                                                  const Dataset& dataset);

/// Smallest generalized Rayleigh quotient of (V, J) with its minimizing unit
/// direction. Values outside (0, 1] are reported as-is; they are meaningful
/// diagnostics.
MinRayleigh alpha_critical(const DenseMatrix& v_hat, const DenseMatrix& j_hat);

/// 5 sigma^2 / (5 sigma^2 + 3 eps (1-eps) a^2): the uniform-input closed form
/// for the contaminated two-regime model.
double two_regime_alpha_critical_closed_form(double sigma, double epsilon, double a);

/// Pointwise alpha-loss of a Gaussian posterior N(m, Sigma) under the
/// two-regime likelihood, in closed form.
double two_regime_pointwise_loss(std::span<const double> m, const DenseMatrix& sigma_mat,
                                 double alpha, double sigma, const DataPoint& point);

struct LocalExpansion {
  double exact_delta = 0.0;
  double predicted_delta = 0.0;
  double rel_err = 0.0;
};

/// Compares the closed-form risk change of spreading N(theta, s^2 U) against
/// the trace prediction (1/2) Tr((V_hat - alpha J_hat) Sigma) on a dataset.
LocalExpansion local_expansion_check(const LinearGaussianTwoRegime& model,
                                     std::span<const double> theta, const DenseMatrix& u_shape,
                                     double s, double alpha, const Dataset& dataset);

/// V_hat + lambda * I / tau^2: the Gaussian-prior curvature added to the
/// numerator of the Rayleigh quotient before alpha_critical.
DenseMatrix prior_curvature_adjustment(const DenseMatrix& v_hat, const PriorSpec& prior,
                                       double lambda);

struct VarianceProfilePoint {
  double x = 0.0;
  double mean = 0.0;
  double total_var = 0.0;
  double epistemic_var = 0.0;
};

/// total = sigma^2 + phi(x)^T Sigma phi(x); epistemic = phi(x)^T Sigma phi(x).
std::vector<VarianceProfilePoint> epistemic_variance_profile(std::span<const double> m,
                                                             const DenseMatrix& sigma_mat,
                                                             double sigma,
                                                             std::span<const double> xs);

StabilityReport make_stability_report(const ConditionalModel& model,
                                      std::span<const double> theta, const Dataset& dataset);

/// Key-value text record; keys: alpha_critical, direction, v_hat, j_hat,
/// n_samples, theta_eval. Matrices are row-major with ';' between rows.
std::string format_stability_report(const StabilityReport& report);

}  // namespace renyiflow
