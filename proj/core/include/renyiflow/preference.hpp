#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "renyiflow/models.hpp"
#include "renyiflow/renyi_loss.hpp"
#include "renyiflow/trainer.hpp"

namespace renyiflow {

struct PreferenceTriple {
  std::vector<double> x;
  std::vector<double> y_plus;
  std::vector<double> y_minus;
};

struct PreferenceDataset {
  std::vector<PreferenceTriple> triples;

  std::size_t size() const { return triples.size(); }
  bool empty() const { return triples.empty(); }
  const PreferenceTriple& operator[](std::size_t i) const { return triples[i]; }
};

/// M low-rank-adapter policies over a shared frozen reference (the zero
/// adapter) with Bradley-Terry inverse temperature beta.
struct PreferenceEnsemble {
  const LowRankAdapterModel* model = nullptr;
  std::vector<std::vector<double>> params;
  double beta = 0.1;

  std::size_t size() const { return params.size(); }
  std::size_t dim() const { return params.empty() ? 0 : params[0].size(); }
  void validate() const;
};

/// Policy-vs-reference log-likelihood ratio difference:
/// Delta_i = log p_i(y+|x) - log p_i(y-|x) - log p_ref(y+|x) + log p_ref(y-|x).
double particle_margin(const PreferenceEnsemble& ensemble, std::size_t i,
                       const PreferenceTriple& triple);

/// log r = log sigmoid(beta * delta) = -softplus(-beta * delta).
double log_preference_likelihood(double beta, double delta);

/// Row-major M x B matrix of log r_{i,b}. Entries are filled independently.
std::vector<double> log_preference_matrix(const PreferenceEnsemble& ensemble,
                                          std::span<const PreferenceTriple> batch);

/// -(1/alpha) log((1/M) sum_i r_i^alpha); alpha = 0 takes the mean-NLL branch.
double preference_loss(const PreferenceEnsemble& ensemble, double alpha,
                       const PreferenceTriple& triple);

ResponsibilityMatrix preference_responsibilities(const PreferenceEnsemble& ensemble,
                                                 double alpha,
                                                 std::span<const PreferenceTriple> batch);

/// g_i = -(N/B) sum_b w_{i,b} beta (1 - r_{i,b}) grad Delta_{i,b} over the
/// adapter factors.
std::vector<std::vector<double>> preference_gradients(const PreferenceEnsemble& ensemble,
                                                      double alpha,
                                                      std::span<const PreferenceTriple> batch,
                                                      std::size_t n);

struct PreferenceTrainResult {
  PreferenceEnsemble ensemble;
  TrainTrace trace;
};

/// Minibatched AdamW on the alpha-aggregated preference objective with the
/// same (N/B) data scaling and (1/N) regularizer convention as the
/// supervised trainer.
PreferenceTrainResult train_preference(const LowRankAdapterModel& model,
                                       const PreferenceDataset& dataset,
                                       PreferenceEnsemble initial, double alpha, double lambda,
                                       const TrainerConfig& trainer_cfg);

/// CSV with columns x_*,yplus_*,yminus_*.
void write_preference_csv(std::ostream& os, const PreferenceDataset& dataset);
PreferenceDataset read_preference_csv(std::istream& is);

}  // namespace renyiflow
