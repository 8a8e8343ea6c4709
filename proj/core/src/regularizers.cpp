#include "renyiflow/regularizers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace renyiflow {

namespace {
constexpr double kLogTwoPi = 1.8378770664093454836;
constexpr double kFallbackBandwidth = 1e-2;
}  // namespace

void PriorSpec::validate() const {
  if (!(tau > 0.0)) throw std::invalid_argument("prior tau must be positive");
}

double PriorSpec::log_density(std::span<const double> theta) const {
  const double d = static_cast<double>(theta.size());
  return -0.5 * d * (kLogTwoPi + 2.0 * std::log(tau)) - squared_norm(theta) / (2.0 * tau * tau);
}

std::vector<double> PriorSpec::grad_log_density(std::span<const double> theta) const {
  std::vector<double> g(theta.size());
  const double inv_var = 1.0 / (tau * tau);
  for (std::size_t k = 0; k < theta.size(); ++k) g[k] = -theta[k] * inv_var;
  return g;
}

KdeSpec KdeSpec::fixed(double epsilon) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("kernel bandwidth must be positive");
  KdeSpec s;
  s.bandwidth = epsilon;
  return s;
}

RegularizerResult prior_potential(const ParticleEnsemble& ensemble, const PriorSpec& prior,
                                  double lambda) {
  ensemble.validate();
  prior.validate();
  if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be non-negative");

  const double m = static_cast<double>(ensemble.size());
  const double coeff = lambda / (m * prior.tau * prior.tau);

  RegularizerResult out;
  out.gradients.reserve(ensemble.size());
  for (const auto& theta : ensemble.params) {
    out.value += 0.5 * coeff * squared_norm(theta);
    std::vector<double> g(theta.size());
    for (std::size_t k = 0; k < theta.size(); ++k) g[k] = coeff * theta[k];
    out.gradients.push_back(std::move(g));
  }
  return out;
}

BandwidthResolution resolve_bandwidth(const ParticleEnsemble& ensemble) {
  ensemble.validate();
  const std::size_t m = ensemble.size();
  if (m < 2) throw std::invalid_argument("heuristic needs >=2 particles");

  std::vector<double> dists;
  dists.reserve(m * (m - 1) / 2);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j) {
      double sq = 0.0;
      for (std::size_t k = 0; k < ensemble.params[i].size(); ++k) {
        const double d = ensemble.params[i][k] - ensemble.params[j][k];
        sq += d * d;
      }
      dists.push_back(std::sqrt(sq));
    }
  std::sort(dists.begin(), dists.end());
  const std::size_t n = dists.size();
  const double median =
      (n % 2 == 1) ? dists[n / 2] : 0.5 * (dists[n / 2 - 1] + dists[n / 2]);

  BandwidthResolution res;
  res.epsilon = median / std::sqrt(2.0 * std::log(static_cast<double>(m) + 1.0));
  if (!(res.epsilon > 0.0)) {
    res.epsilon = kFallbackBandwidth;
    res.used_fallback = true;
  }
  return res;
}

KdeResult kde_kl(const ParticleEnsemble& ensemble, const PriorSpec& prior, const KdeSpec& kde,
                 double lambda) {
  ensemble.validate();
  prior.validate();
  if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be non-negative");

  const std::size_t m = ensemble.size();
  const std::size_t dim = ensemble.dim();

  KdeResult out;
  if (kde.bandwidth) {
    if (!(*kde.bandwidth > 0.0))
      throw std::invalid_argument("kernel bandwidth must be positive");
    out.bandwidth = *kde.bandwidth;
  } else {
    const auto res = resolve_bandwidth(ensemble);
    out.bandwidth = res.epsilon;
    out.bandwidth_fallback = res.used_fallback;
  }
  const double eps = out.bandwidth;
  const double inv_eps_sq = 1.0 / (eps * eps);
  const double md = static_cast<double>(m);

  // Kernel exponents e_ij = -||theta_i - theta_j||^2 / (2 eps^2); the row
  // softmax gives K_ij / sum_j K_ij, which is exactly K_ij / (M q(theta_i)).
  std::vector<double> exponents(m * m, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j) {
      double sq = 0.0;
      for (std::size_t k = 0; k < dim; ++k) {
        const double d = ensemble.params[i][k] - ensemble.params[j][k];
        sq += d * d;
      }
      const double e = -0.5 * sq * inv_eps_sq;
      exponents[i * m + j] = e;
      exponents[j * m + i] = e;
    }

  const double log_kernel_norm =
      -0.5 * static_cast<double>(dim) * (kLogTwoPi + 2.0 * std::log(eps));

  std::vector<double> row_lse(m);
  std::vector<double> softmax(m * m);
  for (std::size_t i = 0; i < m; ++i) {
    const std::span<const double> row(exponents.data() + i * m, m);
    row_lse[i] = logsumexp(row);
    for (std::size_t j = 0; j < m; ++j)
      softmax[i * m + j] = std::exp(exponents[i * m + j] - row_lse[i]);
  }

  double value = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double log_q = row_lse[i] - std::log(md) + log_kernel_norm;
    value += log_q - prior.log_density(ensemble.params[i]);
  }
  out.value = lambda / md * value;

  out.gradients.assign(m, std::vector<double>(dim, 0.0));
  for (std::size_t i = 0; i < m; ++i) {
    auto& g = out.gradients[i];
    for (std::size_t j = 0; j < m; ++j) {
      if (j == i) continue;
      const double coupling = softmax[i * m + j] + softmax[j * m + i];
      for (std::size_t k = 0; k < dim; ++k) {
        const double diff = ensemble.params[j][k] - ensemble.params[i][k];
        g[k] += coupling * diff * inv_eps_sq;
      }
    }
    const auto prior_grad = prior.grad_log_density(ensemble.params[i]);
    for (std::size_t k = 0; k < dim; ++k) {
      g[k] -= prior_grad[k];
      g[k] *= lambda / md;
    }
  }
  return out;
}

}  // namespace renyiflow
