#include <stdexcept>
#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "renyiflow/renyi_loss.hpp"
#include "test_helpers.hpp"

using namespace renyiflow;
using renyiflow::testing::fd_gradient;
using renyiflow::testing::max_grad_rel_err;
using renyiflow::testing::scripted_ensemble;
using renyiflow::testing::ScriptedScoreModel;

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
const DataPoint kPoint{{0.0}, {0.0}};

std::vector<double> scores_of_probs(std::initializer_list<double> probs) {
  std::vector<double> s;
  for (double p : probs) s.push_back(std::log(p));
  return s;
}

AlphaConfig alpha_cfg(double alpha, std::size_t n = 1) {
  AlphaConfig cfg;
  cfg.alpha = alpha;
  cfg.n = n;
  return cfg;
}
}  // namespace

TEST_CASE("per-example loss on one or two particles") {
  const ScriptedScoreModel model;

  // One particle: alpha cancels.
  const auto single = scripted_ensemble(model, scores_of_probs({0.5}));
  for (double alpha : {0.0, 0.3, 1.0})
    CHECK(per_example_loss(single, alpha_cfg(alpha), kPoint) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));

  // Two particles with p = (0.9, 0.01). Oracles: direct evaluation.
  const auto pair = scripted_ensemble(model, scores_of_probs({0.9, 0.01}));
  const double l1 = -std::log(0.455);
  const double l_half = -2.0 * std::log(0.5 * (std::sqrt(0.9) + std::sqrt(0.01)));
  const double l0 = -0.5 * (std::log(0.9) + std::log(0.01));
  CHECK(per_example_loss(pair, alpha_cfg(1.0), kPoint) == doctest::Approx(l1).epsilon(1e-12));
  CHECK(per_example_loss(pair, alpha_cfg(0.5), kPoint) ==
        doctest::Approx(l_half).epsilon(1e-12));
  CHECK(per_example_loss(pair, alpha_cfg(0.0), kPoint) == doctest::Approx(l0).epsilon(1e-12));
  CHECK(l1 == doctest::Approx(0.78746).epsilon(1e-4));
  CHECK(l_half == doctest::Approx(1.29124).epsilon(1e-4));
  CHECK(l0 == doctest::Approx(2.35527).epsilon(1e-4));
  CHECK(l0 >= l_half);
  CHECK(l_half >= l1);
}

TEST_CASE("vanished likelihoods: partial support propagates, empty support throws") {
  const std::vector<double> one_dead = {-kInf, std::log(0.5)};
  CHECK(per_example_loss_from_scores(0.0, one_dead) == kInf);
  CHECK(per_example_loss_from_scores(1.0, one_dead) ==
        doctest::Approx(-std::log(0.25)).epsilon(1e-12));

  const std::vector<double> all_dead = {-kInf, -kInf};
  CHECK_THROWS_AS(per_example_loss_from_scores(1.0, all_dead), std::runtime_error);
  CHECK_THROWS_AS(per_example_loss_from_scores(0.0, all_dead), std::runtime_error);
}

TEST_CASE("responsibilities: uniform limits and softmax weights") {
  const ScriptedScoreModel model;
  const auto pair = scripted_ensemble(model, scores_of_probs({0.9, 0.01}));
  const std::vector<DataPoint> batch = {kPoint};

  const auto uniform = responsibilities(pair, alpha_cfg(0.0), batch);
  CHECK(uniform.weight(0, 0) == 0.5);
  CHECK(uniform.weight(1, 0) == 0.5);
  CHECK(uniform.ess[0] == 2.0);

  const auto soft = responsibilities(pair, alpha_cfg(1.0), batch);
  CHECK(soft.weight(0, 0) == doctest::Approx(0.9 / 0.91).epsilon(1e-12));
  CHECK(soft.weight(1, 0) == doctest::Approx(0.01 / 0.91).epsilon(1e-12));

  const auto tied = scripted_ensemble(model, scores_of_probs({0.3, 0.3, 0.3}));
  for (double alpha : {0.2, 0.7, 1.0}) {
    const auto r = responsibilities(tied, alpha_cfg(alpha), batch);
    for (std::size_t i = 0; i < 3; ++i)
      CHECK(r.weight(i, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  }
}

TEST_CASE("responsibility columns sum to one with ESS in [1, M]") {
  const ScriptedScoreModel model;
  Rng rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t m = 2 + rng.uniform_index(7);
    std::vector<double> scores(m);
    for (double& s : scores) s = rng.uniform(-40.0, 0.0);
    const auto ens = scripted_ensemble(model, scores);
    const auto r =
        responsibilities(ens, alpha_cfg(0.05 + 0.95 * rng.next_double()), {&kPoint, 1});
    double sum = 0.0;
    for (std::size_t i = 0; i < m; ++i) sum += r.weight(i, 0);
    CHECK(std::abs(sum - 1.0) <= 1e-10);
    CHECK(r.ess[0] >= 1.0 - 1e-12);
    CHECK(r.ess[0] <= static_cast<double>(m) + 1e-12);
  }
}

TEST_CASE("ess closed-form values") {
  const std::vector<double> uniform8(8, 0.125);
  CHECK(ess(uniform8) == doctest::Approx(8.0).epsilon(1e-12));

  const std::vector<double> one_hot = {1.0, 0.0, 0.0};
  CHECK(ess(one_hot) == doctest::Approx(1.0).epsilon(1e-12));

  const double w0 = 0.9 / 0.91, w1 = 0.01 / 0.91;
  const std::vector<double> soft = {w0, w1};
  CHECK(ess(soft) == doctest::Approx(1.0 / (w0 * w0 + w1 * w1)).epsilon(1e-12));
  CHECK(ess(soft) == doctest::Approx(1.02225).epsilon(1e-4));
}

TEST_CASE("minibatch loss carries the N/B scaling") {
  const ScriptedScoreModel model;
  const auto ens = scripted_ensemble(model, scores_of_probs({0.6, 0.2}));
  const std::vector<DataPoint> batch = {kPoint, kPoint, kPoint};

  // B = N at alpha 0: N times the mean per-particle NLL.
  const double l0 = per_example_loss(ens, alpha_cfg(0.0), kPoint);
  CHECK(minibatch_data_loss(ens, alpha_cfg(0.0, 3), batch) ==
        doctest::Approx(3.0 * l0).epsilon(1e-12));

  // Single point, N = B = 1.
  CHECK(minibatch_data_loss(ens, alpha_cfg(0.7, 1), {&kPoint, 1}) ==
        doctest::Approx(per_example_loss(ens, alpha_cfg(0.7), kPoint)).epsilon(1e-14));

  // Doubling N doubles the value exactly.
  CHECK(minibatch_data_loss(ens, alpha_cfg(0.7, 10), batch) * 2.0 ==
        minibatch_data_loss(ens, alpha_cfg(0.7, 20), batch));
}

TEST_CASE("particle gradients: single-particle reduction and exact routing") {
  const LinearGaussianTwoRegime model(0.5);
  ParticleEnsemble single;
  single.model = &model;
  single.params = {{0.4, -0.2}};
  const std::vector<DataPoint> batch = {{{0.5}, {1.0}}, {{-0.3}, {0.2}}};

  const auto grads = particle_gradients(single, alpha_cfg(0.8, 10), batch);
  std::vector<double> expect(2, 0.0);
  for (const auto& p : batch) {
    const auto g = model.grad_log_lik(single.params[0], p);
    for (std::size_t k = 0; k < 2; ++k) expect[k] -= (10.0 / 2.0) * g[k];
  }
  CHECK(grads[0][0] == doctest::Approx(expect[0]).epsilon(1e-12));
  CHECK(grads[0][1] == doctest::Approx(expect[1]).epsilon(1e-12));

  // A particle whose responsibility underflows to exact zero receives
  // nothing from that point.
  const ScriptedScoreModel scripted;
  ParticleEnsemble routed;
  routed.model = &scripted;
  routed.params = {{-800.0}, {std::log(0.5)}};
  const auto resp = responsibilities(routed, alpha_cfg(1.0, 1), {&kPoint, 1});
  REQUIRE(resp.weight(0, 0) == 0.0);
  const auto routed_grads = particle_gradients(routed, alpha_cfg(1.0, 1), {&kPoint, 1});
  CHECK(routed_grads[0][0] == 0.0);
  CHECK(routed_grads[1][0] != 0.0);
}

TEST_CASE("particle gradients match finite differences of the minibatch loss") {
  Rng rng(77);
  const LinearGaussianTwoRegime model(0.6);
  for (int trial = 0; trial < 25; ++trial) {
    ParticleEnsemble ens;
    ens.model = &model;
    const std::size_t m = 2 + rng.uniform_index(3);
    for (std::size_t i = 0; i < m; ++i) ens.params.push_back(rng.normal_vector(2));
    std::vector<DataPoint> batch;
    for (int b = 0; b < 4; ++b) batch.push_back({{rng.uniform(-1.0, 1.0)}, {rng.normal()}});
    const auto cfg = alpha_cfg(trial % 2 == 0 ? 0.8 : 0.0, 12);

    const auto grads = particle_gradients(ens, cfg, batch);
    for (std::size_t i = 0; i < m; ++i) {
      const auto fd = fd_gradient(
          [&](std::span<const double> t) {
            ParticleEnsemble probe = ens;
            probe.params[i].assign(t.begin(), t.end());
            return minibatch_data_loss(probe, cfg, batch);
          },
          ens.params[i]);
      CHECK(max_grad_rel_err(grads[i], fd, 1e-5) <= 1e-4);
    }
  }
}

TEST_CASE("Donsker-Varadhan identity at the optimizer") {
  const ScriptedScoreModel model;

  const auto pair = scripted_ensemble(model, scores_of_probs({0.9, 0.01}));
  const auto worked = dv_identity_check(pair, alpha_cfg(1.0), kPoint);
  CHECK(worked.lhs == doctest::Approx(0.78746).epsilon(1e-4));
  CHECK(worked.rhs == doctest::Approx(worked.lhs).epsilon(1e-12));
  CHECK(worked.gap <= 1e-10);

  // Uniform likelihoods: the tilt is flat and the loss is -log p.
  const auto flat = scripted_ensemble(model, scores_of_probs({0.3, 0.3, 0.3, 0.3}));
  const auto flat_check = dv_identity_check(flat, alpha_cfg(0.6), kPoint);
  CHECK(flat_check.lhs == doctest::Approx(-std::log(0.3)).epsilon(1e-12));
  CHECK(flat_check.gap <= 1e-10);

  Rng rng(101);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t m = 2 + rng.uniform_index(7);
    std::vector<double> scores(m);
    for (double& s : scores) s = -std::exp(rng.normal());
    const auto ens = scripted_ensemble(model, scores);
    const auto check =
        dv_identity_check(ens, alpha_cfg(0.05 + 0.95 * rng.next_double()), kPoint);
    CHECK(check.gap <= 1e-10);
  }

  CHECK_THROWS_AS(dv_identity_check(pair, alpha_cfg(0.0), kPoint), std::invalid_argument);
}

TEST_CASE("Renyi entropy decomposition of the loss") {
  const ScriptedScoreModel model;

  const auto flat = scripted_ensemble(model, scores_of_probs({0.4, 0.4}));
  const auto flat_check = entropy_decomposition_check(flat, kPoint, 0.3);
  CHECK(flat_check.renyi_entropy == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(flat_check.l_alpha == doctest::Approx(flat_check.l_one).epsilon(1e-12));

  const auto pair = scripted_ensemble(model, scores_of_probs({0.9, 0.01}));
  CHECK(entropy_decomposition_check(pair, kPoint, 0.5).gap <= 1e-10);

  // Near-collapsed responsibilities: the entropy approaches -log M and the
  // alpha-loss sits far above the mixture loss.
  const std::vector<double> collapse_scores = {0.0, -200.0, -200.0, -200.0};
  const auto collapsed = scripted_ensemble(model, collapse_scores);
  const auto col = entropy_decomposition_check(collapsed, kPoint, 0.5);
  CHECK(col.renyi_entropy == doctest::Approx(-std::log(4.0)).epsilon(1e-3));
  CHECK(col.l_alpha > col.l_one + 1.0);

  Rng rng(202);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t m = 2 + rng.uniform_index(7);
    std::vector<double> scores(m);
    for (double& s : scores) s = -std::exp(rng.normal());
    const auto ens = scripted_ensemble(model, scores);
    const auto check = entropy_decomposition_check(ens, kPoint, 0.05 + 0.9 * rng.next_double());
    CHECK(check.gap <= 1e-10);
  }

  CHECK_THROWS_WITH_AS(entropy_decomposition_check(pair, kPoint, 0.0),
                       "decomposition undefined at endpoints", std::invalid_argument);
  CHECK_THROWS_AS(entropy_decomposition_check(pair, kPoint, 1.0), std::invalid_argument);
}

TEST_CASE("variance lower bound on the Jensen gap") {
  const ScriptedScoreModel model;

  const auto tied = scripted_ensemble(model, scores_of_probs({0.25, 0.25}));
  const auto tied_check = variance_bound_check(tied, kPoint, 0.8);
  CHECK(tied_check.gap == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(tied_check.bound == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(tied_check.holds);

  // Worked pair: gap 1.56781, variance 0.198025, bound 0.12224.
  const auto pair = scripted_ensemble(model, scores_of_probs({0.9, 0.01}));
  const auto worked = variance_bound_check(pair, kPoint, 1.0);
  CHECK(worked.gap == doctest::Approx(2.35527 - 0.78746).epsilon(1e-4));
  CHECK(worked.bound == doctest::Approx(0.198025 / 1.62).epsilon(1e-5));
  CHECK(worked.holds);

  Rng rng(303);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t m = 2 + rng.uniform_index(7);
    std::vector<double> scores(m);
    for (double& s : scores) s = -std::exp(rng.normal());
    const auto ens = scripted_ensemble(model, scores);
    CHECK(variance_bound_check(ens, kPoint, 0.05 + 0.95 * rng.next_double()).holds);
  }
}

TEST_CASE("shielding bound attenuates off-support gradients") {
  const ScriptedScoreModel model;

  const std::vector<double> gap_scores = {-1.0, -11.0};
  const auto ens = scripted_ensemble(model, gap_scores);
  const auto records = shielding_check(ens, alpha_cfg(1.0), kPoint);
  // Best particle: bound equals its raw gradient norm (= 1 for the scripted
  // model) and its responsibility cannot exceed one.
  CHECK(records[0].bound == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(records[0].holds);
  // Loss gap 10 at alpha 1: responsibility and gradient shrink below e^-10.
  CHECK(records[1].grad_norm <= std::exp(-10.0));
  CHECK(records[1].bound == doctest::Approx(std::exp(-10.0)).epsilon(1e-10));
  CHECK(records[1].holds);

  Rng rng(404);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t m = 2 + rng.uniform_index(7);
    std::vector<double> scores(m);
    for (double& s : scores) s = -std::exp(rng.normal());
    const auto e = scripted_ensemble(model, scores);
    for (const auto& rec :
         shielding_check(e, alpha_cfg(0.05 + 0.95 * rng.next_double()), kPoint))
      CHECK(rec.holds);
  }
}

TEST_CASE("monotonicity and interpolation in alpha") {
  const ScriptedScoreModel model;
  Rng rng(505);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t m = 2 + rng.uniform_index(7);
    std::vector<double> scores(m);
    for (double& s : scores) s = rng.uniform(-20.0, 0.0);
    const auto ens = scripted_ensemble(model, scores);

    const double l0 = per_example_loss(ens, alpha_cfg(0.0), kPoint);
    const double l1 = per_example_loss(ens, alpha_cfg(1.0), kPoint);
    double prev = l0;
    for (double alpha : {0.05, 0.2, 0.4, 0.6, 0.8, 1.0}) {
      const double la = per_example_loss(ens, alpha_cfg(alpha), kPoint);
      CHECK(la <= prev + 1e-12);
      CHECK(la >= l1 - 1e-12);
      CHECK(la <= l0 + 1e-12);
      prev = la;
    }
  }

  // Strictness: distinct likelihoods strictly separate the alpha levels.
  const auto pair = scripted_ensemble(model, scores_of_probs({0.9, 0.2}));
  CHECK(per_example_loss(pair, alpha_cfg(0.3), kPoint) >
        per_example_loss(pair, alpha_cfg(0.9), kPoint));
}

TEST_CASE("alpha to zero limit approaches the analytic branch") {
  const ScriptedScoreModel model;
  Rng rng(606);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = 2 + rng.uniform_index(5);
    std::vector<double> scores(m);
    for (double& s : scores) s = rng.uniform(-8.0, 0.0);
    const auto ens = scripted_ensemble(model, scores);
    const double l0 = per_example_loss(ens, alpha_cfg(0.0), kPoint);
    const double l_tiny = per_example_loss(ens, alpha_cfg(1e-6), kPoint);
    CHECK(std::abs(l_tiny - l0) <= 1e-4);
  }
}

TEST_CASE("cumulant expansion remainder is quadratic in alpha") {
  const ScriptedScoreModel model;
  Rng rng(707);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t m = 16;
    std::vector<double> losses(m);
    double mean = 0.0;
    for (double& l : losses) {
      l = std::exp(rng.normal());
      mean += l;
    }
    mean /= static_cast<double>(m);
    double var = 0.0, skew = 0.0;
    for (double l : losses) {
      var += (l - mean) * (l - mean);
      skew += (l - mean) * (l - mean) * (l - mean);
    }
    var /= static_cast<double>(m);
    skew /= static_cast<double>(m);
    if (var < 0.2 || std::abs(skew) < 0.5 * std::pow(var, 1.5)) continue;

    std::vector<double> scores(m);
    for (std::size_t i = 0; i < m; ++i) scores[i] = -losses[i];
    const auto ens = scripted_ensemble(model, scores);
    const auto remainder = [&](double alpha) {
      const double l0 = per_example_loss(ens, alpha_cfg(0.0), kPoint);
      const double la = per_example_loss(ens, alpha_cfg(alpha), kPoint);
      return std::abs((l0 - la) - 0.5 * alpha * var);
    };
    const double ratio = remainder(1e-3) / remainder(1e-2);
    CHECK(ratio >= 0.005);
    CHECK(ratio <= 0.02);
  }
}

TEST_CASE("config and ensemble validation") {
  AlphaConfig bad;
  bad.alpha = 1.5;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad.alpha = 0.5;
  bad.lambda = -1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  ParticleEnsemble empty;
  CHECK_THROWS_AS(empty.validate(), std::invalid_argument);

  const ScriptedScoreModel model;
  ParticleEnsemble ragged;
  ragged.model = &model;
  ragged.params = {{0.0}, {0.0, 1.0}};
  CHECK_THROWS_AS(ragged.validate(), std::invalid_argument);
}
