#include <benchmark/benchmark.h>

#include <vector>

#include "renyiflow/fixed_point.hpp"
#include "renyiflow/regularizers.hpp"
#include "renyiflow/renyi_loss.hpp"
#include "renyiflow/stability.hpp"
#include "renyiflow/trainer.hpp"

using namespace renyiflow;

namespace {

Dataset make_data(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  return sample_two_regime(n, 1.0, 2.0, 0.2, 0.5, rng);
}

ParticleEnsemble make_ensemble(const ConditionalModel& model, std::size_t m,
                               std::uint64_t seed) {
  Rng rng(seed);
  return init_ensemble(model, m, 0.3, rng);
}

void BM_ScoreMatrix(benchmark::State& state) {
  const LinearGaussianTwoRegime model(0.5);
  const auto data = make_data(static_cast<std::size_t>(state.range(1)), 1);
  const auto ens = make_ensemble(model, static_cast<std::size_t>(state.range(0)), 2);
  for (auto _ : state) {
    auto scores = score_matrix(ens, data.points);
    benchmark::DoNotOptimize(scores);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(1));
}

void BM_Responsibilities(benchmark::State& state) {
  const LinearGaussianTwoRegime model(0.5);
  const auto data = make_data(256, 3);
  const auto ens = make_ensemble(model, static_cast<std::size_t>(state.range(0)), 4);
  AlphaConfig cfg;
  cfg.alpha = 0.8;
  cfg.n = data.size();
  for (auto _ : state) {
    auto resp = responsibilities(ens, cfg, data.points);
    benchmark::DoNotOptimize(resp);
  }
}

void BM_ParticleGradients(benchmark::State& state) {
  const LinearGaussianTwoRegime model(0.5);
  const auto data = make_data(static_cast<std::size_t>(state.range(1)), 5);
  const auto ens = make_ensemble(model, static_cast<std::size_t>(state.range(0)), 6);
  AlphaConfig cfg;
  cfg.alpha = 0.8;
  cfg.n = data.size();
  for (auto _ : state) {
    auto grads = particle_gradients(ens, cfg, data.points);
    benchmark::DoNotOptimize(grads);
  }
}

void BM_KdeRegularizer(benchmark::State& state) {
  DenseMatrix base(8, 8);
  const LowRankAdapterModel model(std::move(base), 4, 1.0);  // 64 parameters
  const auto ens = make_ensemble(model, static_cast<std::size_t>(state.range(0)), 7);
  const PriorSpec prior{1.0};
  const KdeSpec kde = KdeSpec::median_heuristic();
  for (auto _ : state) {
    auto reg = kde_kl(ens, prior, kde, 0.5);
    benchmark::DoNotOptimize(reg);
  }
}

void BM_JacobiEig(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  Rng rng(8);
  DenseMatrix a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      const double v = rng.normal();
      a(i, j) = v;
      a(j, i) = v;
    }
  for (auto _ : state) {
    auto eig = sym_eig(a);
    benchmark::DoNotOptimize(eig);
  }
}

void BM_EmpiricalVJ(benchmark::State& state) {
  const LinearGaussianTwoRegime model(0.5);
  const auto data = make_data(static_cast<std::size_t>(state.range(0)), 9);
  const std::vector<double> theta = {1.0, 0.4};
  for (auto _ : state) {
    auto vj = empirical_v_j(model, theta, data);
    benchmark::DoNotOptimize(vj);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_FixedPointSolve(benchmark::State& state) {
  const auto table = DiscreteTable::generalist_specialists(0.9, 0.01, 0.3);
  const std::vector<double> uniform(3, 1.0 / 3.0);
  for (auto _ : state) {
    auto result = solve_self_consistent(table, 0.8, 1.0, uniform, FixedPointConfig{});
    benchmark::DoNotOptimize(result);
  }
}

void BM_TrainSteps(benchmark::State& state) {
  const LinearGaussianTwoRegime model(0.25);
  Rng data_rng(10);
  Dataset data;
  for (int i = 0; i < 256; ++i) {
    const double x = data_rng.uniform(0.2, 1.0);
    const double sign = (i % 2 == 0) ? 1.0 : -1.0;
    data.points.push_back({{x}, {sign * 2.0 * x + 0.25 * data_rng.normal()}});
  }
  AlphaConfig acfg;
  acfg.alpha = 0.8;
  acfg.n = data.size();
  TrainerConfig tcfg;
  tcfg.steps = 10;
  tcfg.batch_size = 64;
  for (auto _ : state) {
    Rng init_rng(11);
    auto init = init_ensemble(model, static_cast<std::size_t>(state.range(0)), 0.5, init_rng);
    auto result = train(model, data, std::move(init), acfg, tcfg);
    benchmark::DoNotOptimize(result);
  }
}

}  // namespace

BENCHMARK(BM_ScoreMatrix)->Args({4, 256})->Args({8, 1024})->Args({16, 4096});
BENCHMARK(BM_Responsibilities)->Arg(4)->Arg(16)->Arg(64);
BENCHMARK(BM_ParticleGradients)->Args({4, 256})->Args({8, 1024});
BENCHMARK(BM_KdeRegularizer)->Arg(4)->Arg(16)->Arg(64);
BENCHMARK(BM_JacobiEig)->Arg(4)->Arg(16)->Arg(64);
BENCHMARK(BM_EmpiricalVJ)->Arg(1000)->Arg(100000);
BENCHMARK(BM_FixedPointSolve);
BENCHMARK(BM_TrainSteps)->Arg(2)->Arg(8);

BENCHMARK_MAIN();
