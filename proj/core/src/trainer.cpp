#include "renyiflow/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>

#include "renyiflow/io.hpp"
#include "renyiflow/parallel.hpp"

namespace renyiflow {

void TrainerConfig::validate() const {
  if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw std::invalid_argument("beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw std::invalid_argument("beta2 must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw std::invalid_argument("adam_eps must be positive");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight_decay must be non-negative");
  if (!(init_spread >= 0.0)) throw std::invalid_argument("init_spread must be non-negative");
  prior.validate();
}

AdamState AdamState::zeros(std::size_t num_particles, std::size_t dim) {
  AdamState s;
  s.first_moment.assign(num_particles, std::vector<double>(dim, 0.0));
  s.second_moment.assign(num_particles, std::vector<double>(dim, 0.0));
  s.step_count = 0;
  return s;
}

void adamw_step(std::vector<std::vector<double>>& params,
                const std::vector<std::vector<double>>& grads, AdamState& state,
                const TrainerConfig& cfg) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size())
    throw std::invalid_argument("adamw_step: shape mismatch");
  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  const double decay = 1.0 - cfg.learning_rate * cfg.weight_decay;

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& theta = params[i];
    const auto& g = grads[i];
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    if (theta.size() != g.size()) throw std::invalid_argument("adamw_step: shape mismatch");
    for (std::size_t k = 0; k < theta.size(); ++k) {
      theta[k] *= decay;
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
      const double m_hat = m[k] / bc1;
      const double v_hat = v[k] / bc2;
      theta[k] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
    }
  }
}

void write_trace_csv(std::ostream& os, const TrainTrace& trace) {
  os << "step,data_loss,reg_value,objective,mean_ess,min_ess\n";
  for (const auto& r : trace.rows) {
    os << r.step << ',' << format_double(r.data_loss) << ',' << format_double(r.reg_value)
       << ',' << format_double(r.objective) << ',' << format_double(r.mean_ess) << ','
       << format_double(r.min_ess) << '\n';
  }
}

ParticleEnsemble init_ensemble(const ConditionalModel& model, std::size_t num_particles,
                               double init_spread, Rng& rng) {
  if (num_particles == 0) throw std::invalid_argument("need at least one particle");
  const auto base = model.init_params(rng);
  ParticleEnsemble ens;
  ens.model = &model;
  ens.params.reserve(num_particles);
  for (std::size_t i = 0; i < num_particles; ++i) {
    std::vector<double> theta = base;
    for (double& v : theta) v += init_spread * rng.normal();
    ens.params.push_back(std::move(theta));
  }
  ens.validate();
  return ens;
}

namespace {

RegularizerResult evaluate_regularizer(const ParticleEnsemble& ensemble,
                                       const AlphaConfig& alpha_cfg, const TrainerConfig& cfg) {
  switch (cfg.regularizer) {
    case RegularizerKind::kNone: {
      RegularizerResult r;
      r.gradients.assign(ensemble.size(), std::vector<double>(ensemble.dim(), 0.0));
      return r;
    }
    case RegularizerKind::kPrior:
      return prior_potential(ensemble, cfg.prior, alpha_cfg.lambda);
    case RegularizerKind::kKde: {
      const auto kres = kde_kl(ensemble, cfg.prior, cfg.kde, alpha_cfg.lambda);
      return RegularizerResult{kres.value, kres.gradients};
    }
  }
  throw std::logic_error("unknown regularizer kind");
}

}  // namespace

TrainResult train(const ConditionalModel& model, const Dataset& dataset,
                  ParticleEnsemble initial, const AlphaConfig& alpha_cfg,
                  const TrainerConfig& trainer_cfg) {
  alpha_cfg.validate();
  trainer_cfg.validate();
  if (dataset.empty()) throw std::invalid_argument("dataset must be non-empty");
  initial.validate();
  if (initial.model != &model) throw std::invalid_argument("ensemble bound to another model");

  TrainResult result;
  result.ensemble = std::move(initial);
  result.trace.weight_decay_with_prior =
      trainer_cfg.weight_decay > 0.0 && trainer_cfg.regularizer == RegularizerKind::kPrior;
  result.trace.rows.reserve(trainer_cfg.steps);

  const std::size_t n = dataset.size();
  const std::size_t m = result.ensemble.size();
  const std::size_t dim = result.ensemble.dim();

  AdamState state = AdamState::zeros(m, dim);
  Rng shuffle_rng(mix_seed(trainer_cfg.seed, 0x5A11), 0x7261696E);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::size_t epoch_pos = n;  // forces a shuffle before the first batch

  std::vector<DataPoint> batch;
  std::vector<std::size_t> batch_ids;
  for (std::size_t step = 0; step < trainer_cfg.steps; ++step) {
    if (epoch_pos >= n) {
      shuffle_rng.shuffle(order);
      epoch_pos = 0;
    }
    const std::size_t take = std::min(trainer_cfg.batch_size, n - epoch_pos);
    batch.clear();
    batch_ids.clear();
    for (std::size_t k = 0; k < take; ++k) {
      batch_ids.push_back(order[epoch_pos + k]);
      batch.push_back(dataset[order[epoch_pos + k]]);
    }
    epoch_pos += take;

    const auto scores = score_matrix(result.ensemble, batch);
    const double scale = static_cast<double>(alpha_cfg.n) / static_cast<double>(take);

    double data_loss = 0.0;
    std::vector<double> col(m);
    for (std::size_t b = 0; b < take; ++b) {
      for (std::size_t i = 0; i < m; ++i) col[i] = scores[i * take + b];
      try {
        data_loss += per_example_loss_from_scores(alpha_cfg.alpha, col);
      } catch (const std::runtime_error&) {
        throw std::runtime_error("all particle likelihoods vanished on example " +
                                 std::to_string(batch_ids[b]));
      }
    }
    data_loss *= scale;

    const auto resp = responsibilities_from_scores(alpha_cfg.alpha, scores, m, take);
    const double mean_ess =
        std::accumulate(resp.ess.begin(), resp.ess.end(), 0.0) / static_cast<double>(take);
    const double min_ess = *std::min_element(resp.ess.begin(), resp.ess.end());

    std::vector<std::vector<double>> grads(m);
    parallel_for(m, [&](std::size_t i) {
      std::vector<double> g(dim, 0.0);
      for (std::size_t b = 0; b < take; ++b) {
        const double w = resp.weight(i, b);
        if (w == 0.0) continue;
        const auto gl = model.grad_log_lik(result.ensemble.params[i], batch[b]);
        for (std::size_t k = 0; k < dim; ++k) g[k] -= scale * w * gl[k];
      }
      grads[i] = std::move(g);
    });

    const auto reg = evaluate_regularizer(result.ensemble, alpha_cfg, trainer_cfg);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t k = 0; k < dim; ++k) grads[i][k] += inv_n * reg.gradients[i][k];

    result.trace.rows.push_back(TraceRow{step, data_loss, reg.value,
                                         data_loss + inv_n * reg.value, mean_ess, min_ess});

    adamw_step(result.ensemble.params, grads, state, trainer_cfg);
  }
  return result;
}

}  // namespace renyiflow
