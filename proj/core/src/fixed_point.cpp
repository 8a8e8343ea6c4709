#include "renyiflow/fixed_point.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace renyiflow {

namespace {

void check_prior(std::span<const double> prior, std::size_t k) {
  if (prior.size() != k) throw std::invalid_argument("prior size must match table rows");
  double sum = 0.0;
  for (double p : prior) {
    if (!(p >= 0.0)) throw std::invalid_argument("prior entries must be non-negative");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("prior must sum to 1");
}

std::vector<double> normalized_softmax(std::span<const double> exponents) {
  const double mx = *std::max_element(exponents.begin(), exponents.end());
  std::vector<double> out(exponents.size());
  double z = 0.0;
  for (std::size_t k = 0; k < exponents.size(); ++k) {
    out[k] = std::exp(exponents[k] - mx);
    z += out[k];
  }
  for (double& v : out) v /= z;
  return out;
}

// One application of the undamped self-consistency map.
std::vector<double> self_consistency_map(const DiscreteTable& table, double alpha,
                                         double lambda, std::span<const double> prior,
                                         std::span<const double> q,
                                         const DenseMatrix& powered) {
  const std::size_t k = table.num_params();
  const std::size_t n = table.num_observations();
  std::vector<double> exponents(k);
  for (std::size_t row = 0; row < k; ++row) {
    double tilt = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double a_i = 0.0;
      for (std::size_t r = 0; r < k; ++r) a_i += q[r] * powered(r, i);
      tilt += powered(row, i) / a_i;
    }
    exponents[row] =
        (prior[row] > 0.0 ? std::log(prior[row]) : -1e300) + tilt / (lambda * alpha);
  }
  return normalized_softmax(exponents);
}

}  // namespace

void DiscretePosterior::validate() const {
  if (probs.empty()) throw std::invalid_argument("empty posterior");
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0)) throw std::invalid_argument("posterior entries must be non-negative");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-12) throw std::invalid_argument("posterior must sum to 1");
}

void FixedPointConfig::validate() const {
  if (!(damping > 0.0 && damping <= 1.0))
    throw std::invalid_argument("damping must lie in (0, 1]");
  if (!(tol > 0.0)) throw std::invalid_argument("tol must be positive");
  if (max_iters == 0) throw std::invalid_argument("max_iters must be positive");
}

FixedPointResult solve_self_consistent(const DiscreteTable& table, double alpha, double lambda,
                                       std::span<const double> prior,
                                       const FixedPointConfig& cfg,
                                       std::optional<std::vector<double>> init) {
  cfg.validate();
  if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
  if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be positive");
  const std::size_t k = table.num_params();
  const std::size_t n = table.num_observations();
  check_prior(prior, k);

  DenseMatrix powered(k, n);
  for (std::size_t r = 0; r < k; ++r)
    for (std::size_t i = 0; i < n; ++i)
      powered(r, i) = std::exp(alpha * table.log_lik(r, i));

  std::vector<double> q;
  if (init) {
    check_prior(*init, k);
    q = *init;
  } else {
    q.assign(k, 1.0 / static_cast<double>(k));
  }

  FixedPointResult result;
  for (std::size_t iter = 1; iter <= cfg.max_iters; ++iter) {
    const auto q_new = self_consistency_map(table, alpha, lambda, prior, q, powered);
    double delta = 0.0;
    for (std::size_t r = 0; r < k; ++r) {
      const double next = (1.0 - cfg.damping) * q[r] + cfg.damping * q_new[r];
      delta = std::max(delta, std::abs(next - q[r]));
      q[r] = next;
    }
    result.iterations = iter;
    if (delta < cfg.tol || k == 1) {
      result.converged = true;
      break;
    }
  }

  const auto mapped = self_consistency_map(table, alpha, lambda, prior, q, powered);
  for (std::size_t r = 0; r < k; ++r)
    result.residual = std::max(result.residual, std::abs(mapped[r] - q[r]));
  result.posterior.probs = std::move(q);
  return result;
}

DiscretePosterior gibbs_posterior(const DiscreteTable& table, double lambda,
                                  std::span<const double> prior) {
  if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be positive");
  const std::size_t k = table.num_params();
  const std::size_t n = table.num_observations();
  check_prior(prior, k);

  std::vector<double> exponents(k);
  for (std::size_t r = 0; r < k; ++r) {
    double sum_log = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum_log += table.log_lik(r, i);
    exponents[r] = (prior[r] > 0.0 ? std::log(prior[r]) : -1e300) + sum_log / lambda;
  }
  DiscretePosterior out;
  out.probs = normalized_softmax(exponents);
  return out;
}

std::optional<double> example1_analytic_crossing(double h, double eps, double m) {
  const auto f = [&](double a) {
    return std::pow(h, a) + std::pow(eps, a) - 2.0 * std::pow(m, a);
  };
  double lo = 1e-4;
  double hi = 1.0;
  double f_lo = f(lo);
  double f_hi = f(hi);
  // A degenerate table keeps f identically zero: no takeover to locate.
  if (f_lo == 0.0 && f_hi == 0.0) return std::nullopt;
  if (f_lo == 0.0) return lo;
  if (f_hi == 0.0) return hi;
  if ((f_lo < 0.0) == (f_hi < 0.0)) return std::nullopt;
  while (hi - lo > 1e-6) {
    const double mid = 0.5 * (lo + hi);
    const double f_mid = f(mid);
    if (f_mid == 0.0) return mid;
    if ((f_mid < 0.0) == (f_lo < 0.0)) {
      lo = mid;
      f_lo = f_mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

TransitionSweep example1_transition_sweep(double h, double eps, double m, double lambda,
                                          std::span<const double> alphas,
                                          const FixedPointConfig& cfg) {
  if (!(eps > 0.0 && eps <= m && m <= h && h < 1.0))
    throw std::invalid_argument("expected 0 < eps <= m <= h < 1");
  if (alphas.empty()) throw std::invalid_argument("empty alpha grid");

  const DiscreteTable table = DiscreteTable::generalist_specialists(h, eps, m);
  const std::vector<double> uniform(3, 1.0 / 3.0);

  TransitionSweep sweep;
  const auto ratio_at = [&](double alpha) {
    const auto res = solve_self_consistent(table, alpha, lambda, uniform, cfg);
    return res;
  };

  for (double alpha : alphas) {
    const auto res = ratio_at(alpha);
    SweepRow row;
    row.alpha = alpha;
    row.probs = res.posterior.probs;
    row.ratio_specialist_generalist = res.posterior.probs[1] / res.posterior.probs[0];
    row.converged = res.converged;
    sweep.rows.push_back(std::move(row));
  }

  if (const auto root = example1_analytic_crossing(h, eps, m)) {
    sweep.analytic_crossing = *root;
    sweep.analytic_crossing_found = true;
  }

  // Bracket the specialist takeover on the grid, then bisect with the solver.
  for (std::size_t i = 0; i + 1 < sweep.rows.size(); ++i) {
    const double g_lo = sweep.rows[i].ratio_specialist_generalist - 1.0;
    const double g_hi = sweep.rows[i + 1].ratio_specialist_generalist - 1.0;
    if (g_lo == 0.0) {
      sweep.solver_crossing = sweep.rows[i].alpha;
      sweep.solver_crossing_found = true;
      break;
    }
    if ((g_lo < 0.0) != (g_hi < 0.0)) {
      double lo = sweep.rows[i].alpha;
      double hi = sweep.rows[i + 1].alpha;
      bool lo_neg = g_lo < 0.0;
      for (int it = 0; it < 40 && hi - lo > 1e-4; ++it) {
        const double mid = 0.5 * (lo + hi);
        const auto res = ratio_at(mid);
        const double g_mid = res.posterior.probs[1] / res.posterior.probs[0] - 1.0;
        if ((g_mid < 0.0) == lo_neg)
          lo = mid;
        else
          hi = mid;
      }
      sweep.solver_crossing = 0.5 * (lo + hi);
      sweep.solver_crossing_found = true;
      break;
    }
  }
  return sweep;
}

}  // namespace renyiflow
