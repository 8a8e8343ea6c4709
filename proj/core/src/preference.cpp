#include "renyiflow/preference.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "renyiflow/io.hpp"
#include "renyiflow/parallel.hpp"

namespace renyiflow {

namespace {

double softplus(double z) {
  if (z > 0.0) return z + std::log1p(std::exp(-z));
  return std::log1p(std::exp(z));
}

void check_triple(const LowRankAdapterModel& model, const PreferenceTriple& t) {
  if (t.x.size() != model.d_in() || t.y_plus.size() != model.d_out() ||
      t.y_minus.size() != model.d_out())
    throw std::invalid_argument("preference triple dimension mismatch");
}

}  // namespace

void PreferenceEnsemble::validate() const {
  if (model == nullptr) throw std::invalid_argument("preference ensemble has no model");
  if (params.empty()) throw std::invalid_argument("preference ensemble needs particles");
  if (!(beta > 0.0)) throw std::invalid_argument("beta must be positive");
  for (const auto& p : params) {
    if (p.size() != model->param_dim())
      throw std::invalid_argument("particle dimension mismatch");
    for (double v : p)
      if (!std::isfinite(v)) throw std::invalid_argument("non-finite particle parameter");
  }
}

double particle_margin(const PreferenceEnsemble& ensemble, std::size_t i,
                       const PreferenceTriple& triple) {
  ensemble.validate();
  if (i >= ensemble.size()) throw std::out_of_range("particle index");
  const auto& model = *ensemble.model;
  check_triple(model, triple);

  const std::vector<double> reference(model.param_dim(), 0.0);
  const DataPoint plus{triple.x, triple.y_plus};
  const DataPoint minus{triple.x, triple.y_minus};
  const double policy = model.log_lik(ensemble.params[i], plus) -
                        model.log_lik(ensemble.params[i], minus);
  const double ref = model.log_lik(reference, plus) - model.log_lik(reference, minus);
  return policy - ref;
}

double log_preference_likelihood(double beta, double delta) {
  return -softplus(-beta * delta);
}

namespace {

// Row-major M x B margins; validates once and shares the reference scores.
std::vector<double> margin_matrix(const PreferenceEnsemble& ensemble,
                                  std::span<const PreferenceTriple> batch) {
  ensemble.validate();
  const auto& model = *ensemble.model;
  for (const auto& t : batch) check_triple(model, t);
  const std::size_t m = ensemble.size();
  const std::size_t b = batch.size();

  const std::vector<double> reference(model.param_dim(), 0.0);
  std::vector<double> ref_diff(b);
  parallel_for(b, [&](std::size_t k) {
    const DataPoint plus{batch[k].x, batch[k].y_plus};
    const DataPoint minus{batch[k].x, batch[k].y_minus};
    ref_diff[k] = model.log_lik(reference, plus) - model.log_lik(reference, minus);
  });

  std::vector<double> margins(m * b);
  parallel_for(m * b, [&](std::size_t flat) {
    const std::size_t i = flat / b;
    const std::size_t k = flat % b;
    const DataPoint plus{batch[k].x, batch[k].y_plus};
    const DataPoint minus{batch[k].x, batch[k].y_minus};
    margins[flat] = model.log_lik(ensemble.params[i], plus) -
                    model.log_lik(ensemble.params[i], minus) - ref_diff[k];
  });
  return margins;
}

}  // namespace

std::vector<double> log_preference_matrix(const PreferenceEnsemble& ensemble,
                                          std::span<const PreferenceTriple> batch) {
  auto values = margin_matrix(ensemble, batch);
  for (double& v : values) v = log_preference_likelihood(ensemble.beta, v);
  return values;
}

double preference_loss(const PreferenceEnsemble& ensemble, double alpha,
                       const PreferenceTriple& triple) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in [0, 1]");
  const auto log_r = log_preference_matrix(ensemble, std::span(&triple, 1));
  return per_example_loss_from_scores(alpha, log_r);
}

ResponsibilityMatrix preference_responsibilities(const PreferenceEnsemble& ensemble,
                                                 double alpha,
                                                 std::span<const PreferenceTriple> batch) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in [0, 1]");
  if (batch.empty()) throw std::invalid_argument("empty batch");
  const auto log_r = log_preference_matrix(ensemble, batch);
  return responsibilities_from_scores(alpha, log_r, ensemble.size(), batch.size());
}

std::vector<std::vector<double>> preference_gradients(const PreferenceEnsemble& ensemble,
                                                      double alpha,
                                                      std::span<const PreferenceTriple> batch,
                                                      std::size_t n) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  if (n == 0) throw std::invalid_argument("training-set size must be positive");
  const std::size_t m = ensemble.size();
  const std::size_t bsz = batch.size();
  const auto& model = *ensemble.model;

  const auto margins = margin_matrix(ensemble, batch);
  std::vector<double> log_r(margins.size());
  for (std::size_t k = 0; k < margins.size(); ++k)
    log_r[k] = log_preference_likelihood(ensemble.beta, margins[k]);
  const auto resp = responsibilities_from_scores(alpha, log_r, m, bsz);
  const double scale = static_cast<double>(n) / static_cast<double>(bsz);

  std::vector<std::vector<double>> grads(m);
  parallel_for(m, [&](std::size_t i) {
    std::vector<double> g(ensemble.dim(), 0.0);
    for (std::size_t b = 0; b < bsz; ++b) {
      const double w = resp.weight(i, b);
      if (w == 0.0) continue;
      // 1 - r = sigmoid(-beta delta) = exp(-softplus(beta delta)).
      const double one_minus_r =
          std::exp(-softplus(ensemble.beta * margins[i * bsz + b]));
      const DataPoint plus{batch[b].x, batch[b].y_plus};
      const DataPoint minus{batch[b].x, batch[b].y_minus};
      const auto g_plus = model.grad_log_lik(ensemble.params[i], plus);
      const auto g_minus = model.grad_log_lik(ensemble.params[i], minus);
      const double coeff = scale * w * ensemble.beta * one_minus_r;
      for (std::size_t k = 0; k < g.size(); ++k)
        g[k] -= coeff * (g_plus[k] - g_minus[k]);
    }
    grads[i] = std::move(g);
  });
  return grads;
}

PreferenceTrainResult train_preference(const LowRankAdapterModel& model,
                                       const PreferenceDataset& dataset,
                                       PreferenceEnsemble initial, double alpha, double lambda,
                                       const TrainerConfig& trainer_cfg) {
  trainer_cfg.validate();
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in [0, 1]");
  if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be non-negative");
  if (dataset.empty()) throw std::invalid_argument("dataset must be non-empty");
  initial.validate();
  if (initial.model != &model) throw std::invalid_argument("ensemble bound to another model");

  PreferenceTrainResult result;
  result.ensemble = std::move(initial);
  result.trace.weight_decay_with_prior =
      trainer_cfg.weight_decay > 0.0 && trainer_cfg.regularizer == RegularizerKind::kPrior;
  result.trace.rows.reserve(trainer_cfg.steps);

  const std::size_t n = dataset.size();
  const std::size_t m = result.ensemble.size();
  const std::size_t dim = result.ensemble.dim();

  AdamState state = AdamState::zeros(m, dim);
  Rng shuffle_rng(mix_seed(trainer_cfg.seed, 0x5A11), 0x70726566);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::size_t epoch_pos = n;

  std::vector<PreferenceTriple> batch;
  for (std::size_t step = 0; step < trainer_cfg.steps; ++step) {
    if (epoch_pos >= n) {
      shuffle_rng.shuffle(order);
      epoch_pos = 0;
    }
    const std::size_t take = std::min(trainer_cfg.batch_size, n - epoch_pos);
    batch.clear();
    for (std::size_t k = 0; k < take; ++k) batch.push_back(dataset[order[epoch_pos + k]]);
    epoch_pos += take;

    const auto log_r = log_preference_matrix(result.ensemble, batch);
    const double scale = static_cast<double>(n) / static_cast<double>(take);

    double data_loss = 0.0;
    std::vector<double> col(m);
    for (std::size_t b = 0; b < take; ++b) {
      for (std::size_t i = 0; i < m; ++i) col[i] = log_r[i * take + b];
      data_loss += per_example_loss_from_scores(alpha, col);
    }
    data_loss *= scale;

    const auto resp = responsibilities_from_scores(alpha, log_r, m, take);
    const double mean_ess =
        std::accumulate(resp.ess.begin(), resp.ess.end(), 0.0) / static_cast<double>(take);
    const double min_ess = *std::min_element(resp.ess.begin(), resp.ess.end());

    auto grads = preference_gradients(result.ensemble, alpha, batch, n);

    ParticleEnsemble view;
    view.model = &model;
    view.params = result.ensemble.params;
    RegularizerResult reg;
    switch (trainer_cfg.regularizer) {
      case RegularizerKind::kNone:
        reg.gradients.assign(m, std::vector<double>(dim, 0.0));
        break;
      case RegularizerKind::kPrior:
        reg = prior_potential(view, trainer_cfg.prior, lambda);
        break;
      case RegularizerKind::kKde: {
        const auto kres = kde_kl(view, trainer_cfg.prior, trainer_cfg.kde, lambda);
        reg = RegularizerResult{kres.value, kres.gradients};
        break;
      }
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t k = 0; k < dim; ++k) grads[i][k] += inv_n * reg.gradients[i][k];

    result.trace.rows.push_back(TraceRow{step, data_loss, reg.value,
                                         data_loss + inv_n * reg.value, mean_ess, min_ess});

    adamw_step(result.ensemble.params, grads, state, trainer_cfg);
  }
  return result;
}

void write_preference_csv(std::ostream& os, const PreferenceDataset& dataset) {
  if (dataset.empty()) throw std::invalid_argument("cannot serialize an empty dataset");
  const std::size_t dx = dataset[0].x.size();
  const std::size_t dy = dataset[0].y_plus.size();
  for (std::size_t i = 0; i < dx; ++i) os << (i ? "," : "") << "x_" << i;
  for (std::size_t i = 0; i < dy; ++i) os << ",yplus_" << i;
  for (std::size_t i = 0; i < dy; ++i) os << ",yminus_" << i;
  os << '\n';
  for (const auto& t : dataset.triples) {
    os << csv_row(t.x) << ',' << csv_row(t.y_plus) << ',' << csv_row(t.y_minus) << '\n';
  }
}

PreferenceDataset read_preference_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("preference CSV: missing header");
  std::size_t dx = 0, dp = 0, dm = 0;
  {
    std::stringstream header(line);
    std::string cell;
    while (std::getline(header, cell, ',')) {
      if (cell.rfind("x_", 0) == 0)
        ++dx;
      else if (cell.rfind("yplus_", 0) == 0)
        ++dp;
      else if (cell.rfind("yminus_", 0) == 0)
        ++dm;
      else
        throw std::runtime_error("preference CSV: unexpected column '" + cell + "'");
    }
  }
  if (dx == 0 || dp == 0 || dp != dm)
    throw std::runtime_error("preference CSV: need x_*, yplus_*, yminus_* columns");

  PreferenceDataset d;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string cell;
    std::vector<double> values;
    while (std::getline(row, cell, ',')) values.push_back(std::stod(cell));
    if (values.size() != dx + dp + dm) throw std::runtime_error("preference CSV: ragged row");
    PreferenceTriple t;
    t.x.assign(values.begin(), values.begin() + dx);
    t.y_plus.assign(values.begin() + dx, values.begin() + dx + dp);
    t.y_minus.assign(values.begin() + dx + dp, values.end());
    d.triples.push_back(std::move(t));
  }
  if (d.empty()) throw std::runtime_error("preference CSV: no rows");
  return d;
}

}  // namespace renyiflow
