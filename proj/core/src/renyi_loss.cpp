#include "renyiflow/renyi_loss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "renyiflow/parallel.hpp"

namespace renyiflow {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

[[noreturn]] void throw_unusable_support() {
  throw std::runtime_error("all particle likelihoods vanished for an example (unusable support)");
}

}  // namespace

void ParticleEnsemble::validate() const {
  if (model == nullptr) throw std::invalid_argument("ensemble has no model");
  if (params.empty()) throw std::invalid_argument("ensemble needs at least one particle");
  const std::size_t d = model->param_dim();
  for (const auto& p : params) {
    if (p.size() != d) throw std::invalid_argument("particle dimension mismatch");
    for (double v : p)
      if (!std::isfinite(v)) throw std::invalid_argument("non-finite particle parameter");
  }
}

void AlphaConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in [0, 1]");
  if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be non-negative");
  if (n == 0) throw std::invalid_argument("training-set size must be positive");
}

std::vector<double> ResponsibilityMatrix::column(std::size_t b) const {
  std::vector<double> col(num_particles);
  for (std::size_t i = 0; i < num_particles; ++i) col[i] = weight(i, b);
  return col;
}

std::size_t ResponsibilityMatrix::argmax_particle(std::size_t b) const {
  std::size_t best = 0;
  for (std::size_t i = 1; i < num_particles; ++i)
    if (weight(i, b) > weight(best, b)) best = i;
  return best;
}

std::vector<double> score_matrix(const ParticleEnsemble& ensemble,
                                 std::span<const DataPoint> batch) {
  ensemble.validate();
  const std::size_t m = ensemble.size();
  const std::size_t b = batch.size();
  std::vector<double> scores(m * b);
  parallel_for(m * b, [&](std::size_t flat) {
    const std::size_t i = flat / b;
    const std::size_t k = flat % b;
    scores[flat] = ensemble.model->log_lik(ensemble.params[i], batch[k]);
  });
  return scores;
}

double per_example_loss_from_scores(double alpha, std::span<const double> scores) {
  if (scores.empty()) throw std::invalid_argument("empty reduction");
  bool any_finite = false;
  for (double s : scores)
    if (s != kNegInf) any_finite = true;
  if (!any_finite) throw_unusable_support();

  const double m = static_cast<double>(scores.size());
  if (alpha == 0.0) {
    // Analytic limit branch: the mean particle NLL.
    double sum = 0.0;
    for (double s : scores) sum += s;
    return -sum / m;
  }
  std::vector<double> scaled(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) scaled[i] = alpha * scores[i];
  return -(logsumexp(scaled) - std::log(m)) / alpha;
}

double per_example_loss(const ParticleEnsemble& ensemble, const AlphaConfig& cfg,
                        const DataPoint& point) {
  cfg.validate();
  const auto scores = score_matrix(ensemble, std::span<const DataPoint>(&point, 1));
  return per_example_loss_from_scores(cfg.alpha, scores);
}

ResponsibilityMatrix responsibilities_from_scores(double alpha, std::span<const double> scores,
                                                  std::size_t num_particles,
                                                  std::size_t num_examples) {
  if (scores.size() != num_particles * num_examples)
    throw std::invalid_argument("score matrix shape mismatch");
  if (num_examples == 0) throw std::invalid_argument("empty batch");

  ResponsibilityMatrix r;
  r.num_particles = num_particles;
  r.num_examples = num_examples;
  r.weights.assign(scores.size(), 0.0);
  r.ess.assign(num_examples, 0.0);

  for (std::size_t b = 0; b < num_examples; ++b) {
    if (alpha == 0.0) {
      const double w = 1.0 / static_cast<double>(num_particles);
      for (std::size_t i = 0; i < num_particles; ++i) r.weights[i * num_examples + b] = w;
    } else {
      double mx = kNegInf;
      for (std::size_t i = 0; i < num_particles; ++i)
        mx = std::max(mx, scores[i * num_examples + b]);
      if (mx == kNegInf) throw_unusable_support();
      double z = 0.0;
      for (std::size_t i = 0; i < num_particles; ++i)
        z += std::exp(alpha * (scores[i * num_examples + b] - mx));
      for (std::size_t i = 0; i < num_particles; ++i)
        r.weights[i * num_examples + b] =
            std::exp(alpha * (scores[i * num_examples + b] - mx)) / z;
    }
    r.ess[b] = ess(r.column(b));
  }
  return r;
}

ResponsibilityMatrix responsibilities(const ParticleEnsemble& ensemble, const AlphaConfig& cfg,
                                      std::span<const DataPoint> batch) {
  cfg.validate();
  if (batch.empty()) throw std::invalid_argument("empty batch");
  const auto scores = score_matrix(ensemble, batch);
  return responsibilities_from_scores(cfg.alpha, scores, ensemble.size(), batch.size());
}

double ess(std::span<const double> weights) {
  double s = 0.0;
  for (double w : weights) s += w * w;
  return 1.0 / s;
}

double minibatch_data_loss(const ParticleEnsemble& ensemble, const AlphaConfig& cfg,
                           std::span<const DataPoint> batch) {
  cfg.validate();
  if (batch.empty()) throw std::invalid_argument("empty batch");
  const std::size_t m = ensemble.size();
  const auto scores = score_matrix(ensemble, batch);
  const double scale = static_cast<double>(cfg.n) / static_cast<double>(batch.size());
  double total = 0.0;
  std::vector<double> col(m);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    for (std::size_t i = 0; i < m; ++i) col[i] = scores[i * batch.size() + b];
    total += per_example_loss_from_scores(cfg.alpha, col);
  }
  return scale * total;
}

std::vector<std::vector<double>> particle_gradients(const ParticleEnsemble& ensemble,
                                                    const AlphaConfig& cfg,
                                                    std::span<const DataPoint> batch) {
  cfg.validate();
  if (batch.empty()) throw std::invalid_argument("empty batch");
  const std::size_t m = ensemble.size();
  const std::size_t bsz = batch.size();
  const auto scores = score_matrix(ensemble, batch);
  const auto resp = responsibilities_from_scores(cfg.alpha, scores, m, bsz);
  const double scale = static_cast<double>(cfg.n) / static_cast<double>(bsz);

  std::vector<std::vector<double>> grads(m);
  parallel_for(m, [&](std::size_t i) {
    std::vector<double> g(ensemble.dim(), 0.0);
    for (std::size_t b = 0; b < bsz; ++b) {
      const double w = resp.weight(i, b);
      if (w == 0.0) continue;  // routed entirely away from this particle
      const auto gl = ensemble.model->grad_log_lik(ensemble.params[i], batch[b]);
      for (std::size_t k = 0; k < g.size(); ++k) g[k] -= scale * w * gl[k];
    }
    grads[i] = std::move(g);
  });
  return grads;
}

DvIdentity dv_identity_check(const ParticleEnsemble& ensemble, const AlphaConfig& cfg,
                             const DataPoint& point) {
  cfg.validate();
  if (!(cfg.alpha > 0.0))
    throw std::invalid_argument("Donsker-Varadhan check needs alpha > 0");
  const auto scores = score_matrix(ensemble, std::span<const DataPoint>(&point, 1));
  const std::size_t m = ensemble.size();
  const auto resp = responsibilities_from_scores(cfg.alpha, scores, m, 1);

  DvIdentity out;
  out.lhs = per_example_loss_from_scores(cfg.alpha, scores);
  // Radon-Nikodym weights w(theta_i) = M * softmax_i average to one under Q^M.
  double data_term = 0.0;
  double kl_term = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double w_rn = static_cast<double>(m) * resp.weight(i, 0);
    if (w_rn == 0.0) continue;
    data_term -= w_rn * scores[i];
    kl_term += w_rn * std::log(w_rn);
  }
  out.rhs = data_term / static_cast<double>(m) +
            kl_term / (cfg.alpha * static_cast<double>(m));
  out.gap = std::abs(out.lhs - out.rhs);
  return out;
}

EntropyDecomposition entropy_decomposition_check(const ParticleEnsemble& ensemble,
                                                 const DataPoint& point, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("decomposition undefined at endpoints");
  const auto scores = score_matrix(ensemble, std::span<const DataPoint>(&point, 1));
  const std::size_t m = ensemble.size();
  const double log_m = std::log(static_cast<double>(m));

  EntropyDecomposition out;
  out.l_alpha = per_example_loss_from_scores(alpha, scores);
  const double lse = logsumexp(scores);
  out.l_one = -(lse - log_m);
  // log w_i of the alpha=1 Radon-Nikodym responsibilities.
  std::vector<double> scaled(m);
  for (std::size_t i = 0; i < m; ++i) scaled[i] = alpha * (scores[i] - lse + log_m);
  out.renyi_entropy = (logsumexp(scaled) - log_m) / (1.0 - alpha);
  const double reconstructed = out.l_one - (1.0 - alpha) / alpha * out.renyi_entropy;
  out.gap = std::abs(out.l_alpha - reconstructed);
  return out;
}

VarianceBound variance_bound_check(const ParticleEnsemble& ensemble, const DataPoint& point,
                                   double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0))
    throw std::invalid_argument("variance bound needs alpha in (0, 1]");
  const auto scores = score_matrix(ensemble, std::span<const DataPoint>(&point, 1));
  const std::size_t m = ensemble.size();
  for (double s : scores)
    if (!std::isfinite(s))
      throw std::invalid_argument("variance bound needs finite positive likelihoods");

  VarianceBound out;
  const double l0 = per_example_loss_from_scores(0.0, scores);
  const double la = per_example_loss_from_scores(alpha, scores);
  out.gap = l0 - la;

  double max_p = 0.0;
  std::vector<double> powered(m);
  for (std::size_t i = 0; i < m; ++i) {
    powered[i] = std::exp(alpha * scores[i]);
    max_p = std::max(max_p, std::exp(scores[i]));
  }
  double mean = 0.0;
  for (double p : powered) mean += p;
  mean /= static_cast<double>(m);
  double var = 0.0;  // population convention over particles
  for (double p : powered) var += (p - mean) * (p - mean);
  var /= static_cast<double>(m);

  out.bound = var / (2.0 * alpha * std::pow(max_p, 2.0 * alpha));
  out.holds = out.gap >= out.bound - 1e-12;
  return out;
}

std::vector<ShieldingRecord> shielding_check(const ParticleEnsemble& ensemble,
                                             const AlphaConfig& cfg, const DataPoint& point) {
  cfg.validate();
  if (!(cfg.alpha > 0.0)) throw std::invalid_argument("shielding bound needs alpha > 0");
  const auto scores = score_matrix(ensemble, std::span<const DataPoint>(&point, 1));
  const std::size_t m = ensemble.size();
  const auto resp = responsibilities_from_scores(cfg.alpha, scores, m, 1);
  const double best_score = *std::max_element(scores.begin(), scores.end());

  std::vector<ShieldingRecord> records(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double raw_norm = norm(ensemble.model->grad_log_lik(ensemble.params[i], point));
    ShieldingRecord rec;
    rec.grad_norm = resp.weight(i, 0) * raw_norm;
    // L_i - L_min = best_score - s_i.
    rec.bound = std::exp(-cfg.alpha * (best_score - scores[i])) * raw_norm;
    rec.holds = rec.grad_norm <= rec.bound + 1e-12 * std::max(1.0, rec.bound);
    records[i] = rec;
  }
  return records;
}

}  // namespace renyiflow
