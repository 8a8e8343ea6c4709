#include <stdexcept>
#include <doctest.h>

#include <cmath>
#include <memory>
#include <sstream>

#include "renyiflow/models.hpp"
#include "test_helpers.hpp"

using namespace renyiflow;
using renyiflow::testing::fd_gradient;
using renyiflow::testing::max_grad_rel_err;

namespace {
constexpr double kLogTwoPi = 1.8378770664093454836;

DataPoint scalar_point(double x, double y) { return {{x}, {y}}; }

LowRankAdapterModel random_lora(Rng& rng, std::size_t d_out = 3, std::size_t d_in = 4,
                                std::size_t rank = 2, double sigma = 0.7) {
  DenseMatrix base(d_out, d_in);
  for (double& v : base.data()) v = rng.normal();
  return LowRankAdapterModel(std::move(base), rank, sigma);
}
}  // namespace

TEST_CASE("two-regime log_lik closed-form values") {
  const LinearGaussianTwoRegime model(1.0);
  const std::vector<double> origin = {0.0, 0.0};
  // Zero residual: just the Gaussian normalizer.
  CHECK(model.log_lik(origin, scalar_point(0.5, 0.0)) ==
        doctest::Approx(-0.5 * kLogTwoPi).epsilon(1e-12));

  const std::vector<double> theta = {1.0, 2.0};
  // phi(0.5) = (0.5, 0.5), mean 1.5.
  const double resid = -1.5;
  CHECK(model.log_lik(theta, scalar_point(0.5, 0.0)) ==
        doctest::Approx(-0.5 * kLogTwoPi - 0.5 * resid * resid).epsilon(1e-12));

  CHECK_THROWS_AS(model.log_lik(std::vector<double>{1.0}, scalar_point(0.0, 0.0)),
                  std::invalid_argument);
}

TEST_CASE("discrete table stores the generalist/specialist likelihoods") {
  const auto table = DiscreteTable::generalist_specialists(0.9, 0.01, 0.3);
  CHECK(table.num_params() == 3);
  CHECK(table.num_observations() == 2);
  CHECK(table.label(1) == "a");
  CHECK(table.log_lik(1, 0) == doctest::Approx(std::log(0.9)).epsilon(1e-15));
  CHECK(table.log_lik(0, 1) == doctest::Approx(std::log(0.3)).epsilon(1e-15));

  // Log-likelihood values exponentiate back into (0, 1].
  for (std::size_t k = 0; k < 3; ++k)
    for (std::size_t i = 0; i < 2; ++i) {
      const double p = std::exp(table.log_lik(k, i));
      CHECK(p > 0.0);
      CHECK(p <= 1.0);
    }

  DenseMatrix bad(1, 1);
  bad(0, 0) = 1.5;
  CHECK_THROWS_AS(DiscreteTable({"x"}, std::move(bad)), std::invalid_argument);
}

TEST_CASE("zero adapter reproduces the frozen base exactly") {
  Rng rng(11);
  const auto model = random_lora(rng);
  const std::vector<double> zero(model.param_dim(), 0.0);
  for (int trial = 0; trial < 20; ++trial) {
    DataPoint p;
    p.x = rng.normal_vector(model.d_in());
    p.y = rng.normal_vector(model.d_out());
    const auto mean = model.base().multiply(p.x);
    double sq = 0.0;
    for (std::size_t i = 0; i < mean.size(); ++i)
      sq += (p.y[i] - mean[i]) * (p.y[i] - mean[i]);
    const double expect = -0.5 * static_cast<double>(model.d_out()) *
                              (kLogTwoPi + 2.0 * std::log(model.sigma())) -
                          sq / (2.0 * model.sigma() * model.sigma());
    CHECK(std::abs(model.log_lik(zero, p) - expect) <= 1e-12);
  }
}

TEST_CASE("two-regime score closed form") {
  const LinearGaussianTwoRegime model(1.0);
  const std::vector<double> origin = {0.0, 0.0};
  // phi(1) = (1, 1), residual 1.
  const auto g = model.grad_log_lik(origin, scalar_point(1.0, 1.0));
  CHECK(g[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(g[1] == doctest::Approx(1.0).epsilon(1e-12));

  // Stationary point: zero residual kills the score.
  const std::vector<double> exact = {1.0, 0.0};
  const auto g0 = model.grad_log_lik(exact, scalar_point(0.5, 0.5));
  CHECK(g0[0] == 0.0);
  CHECK(g0[1] == 0.0);
}

TEST_CASE("gradients match finite differences on every model") {
  Rng rng(42);

  const LinearGaussianTwoRegime linear(0.6);
  const auto lora = random_lora(rng);
  const TinyMlp mlp(2, 5, 2, 0.8);

  const auto check_model = [&](const ConditionalModel& model, auto make_point) {
    for (int trial = 0; trial < 100; ++trial) {
      const auto theta = rng.normal_vector(model.param_dim());
      const DataPoint point = make_point();
      const auto analytic = model.grad_log_lik(theta, point);
      const auto fd = fd_gradient(
          [&](std::span<const double> t) { return model.log_lik(t, point); }, theta);
      CHECK(max_grad_rel_err(analytic, fd) <= 1e-4);
    }
  };

  check_model(linear, [&] { return scalar_point(rng.uniform(-1.0, 1.0), rng.normal()); });
  check_model(lora, [&] {
    DataPoint p;
    p.x = rng.normal_vector(lora.d_in());
    p.y = rng.normal_vector(lora.d_out());
    return p;
  });
  check_model(mlp, [&] {
    DataPoint p;
    p.x = rng.normal_vector(2);
    p.y = rng.normal_vector(2);
    return p;
  });
}

TEST_CASE("two-regime Hessian is the scaled feature outer product") {
  const LinearGaussianTwoRegime model(1.0);
  const std::vector<double> theta = {0.3, -0.4};

  const auto h_pos = model.hessian_nll(theta, scalar_point(1.0, 0.0));
  REQUIRE(h_pos.has_value());
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) CHECK((*h_pos)(i, j) == doctest::Approx(1.0));

  const auto h_neg = model.hessian_nll(theta, scalar_point(-1.0, 0.0));
  CHECK((*h_neg)(0, 0) == doctest::Approx(1.0));
  CHECK((*h_neg)(0, 1) == 0.0);
  CHECK((*h_neg)(1, 1) == 0.0);

  const LinearGaussianTwoRegime wide(2.0);
  const auto h_wide = wide.hessian_nll(theta, scalar_point(1.0, 0.0));
  CHECK((*h_wide)(0, 0) == doctest::Approx(0.25));  // 1/sigma^2 scaling
}

TEST_CASE("adapter Hessian matches gradient differences") {
  Rng rng(5);
  const auto lora = random_lora(rng, 2, 3, 1, 0.9);
  for (int trial = 0; trial < 10; ++trial) {
    const auto theta = rng.normal_vector(lora.param_dim());
    DataPoint p;
    p.x = rng.normal_vector(3);
    p.y = rng.normal_vector(2);
    const auto h = lora.hessian_nll(theta, p);
    REQUIRE(h.has_value());

    const double step = 1e-5;
    std::vector<double> work(theta.begin(), theta.end());
    for (std::size_t k = 0; k < theta.size(); ++k) {
      const double saved = work[k];
      work[k] = saved + step;
      const auto up = lora.grad_log_lik(work, p);
      work[k] = saved - step;
      const auto down = lora.grad_log_lik(work, p);
      work[k] = saved;
      for (std::size_t i = 0; i < theta.size(); ++i) {
        const double fd = -(up[i] - down[i]) / (2.0 * step);
        CHECK(std::abs((*h)(i, k) - fd) <= 1e-5 * std::max(1.0, std::abs(fd)));
      }
    }
  }
  // Models without an analytic form decline.
  const TinyMlp mlp(1, 3, 1, 1.0);
  CHECK_FALSE(mlp.hessian_nll(std::vector<double>(mlp.param_dim(), 0.1),
                              scalar_point(0.2, 0.3))
                  .has_value());
}

TEST_CASE("tiny MLP parameter count matches its layout") {
  const TinyMlp mlp(3, 4, 2, 1.0);
  CHECK(mlp.param_dim() == 4 * (3 + 2) + 4 + 2);
}

TEST_CASE("two-regime sampler reproduces its law") {
  Rng rng(2025);

  SUBCASE("clean limit has no conditional bias") {
    const auto data = sample_two_regime(20000, 1.0, 2.0, 0.0, 0.5, rng);
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& p : data.points)
      if (p.x[0] >= 0.0) {
        sum += p.y[0] - p.x[0];
        ++count;
      }
    CHECK(std::abs(sum / static_cast<double>(count)) < 0.02);
  }

  SUBCASE("pseudo-true slope and excess variance at the defaults") {
    const auto data = sample_two_regime(100000, 1.0, 2.0, 0.2, 0.5, rng);
    double sxy = 0.0, sxx = 0.0;
    for (const auto& p : data.points)
      if (p.x[0] >= 0.0) {
        sxy += p.x[0] * p.y[0];
        sxx += p.x[0] * p.x[0];
      }
    CHECK(sxy / sxx == doctest::Approx(1.4).epsilon(0.02 / 1.4));

    // E[(y - 1.4 x)^2 - sigma^2] / x^2 = eps (1-eps) a^2 for every x > 0.
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& p : data.points)
      if (p.x[0] >= 0.5) {
        const double r = p.y[0] - 1.4 * p.x[0];
        sum += (r * r - 0.25) / (p.x[0] * p.x[0]);
        ++count;
      }
    CHECK(sum / static_cast<double>(count) == doctest::Approx(0.64).epsilon(0.05 / 0.64));
  }

  SUBCASE("identical seeds give identical datasets") {
    Rng r1(555), r2(555);
    const auto d1 = sample_two_regime(100, 1.0, 2.0, 0.2, 0.5, r1);
    const auto d2 = sample_two_regime(100, 1.0, 2.0, 0.2, 0.5, r2);
    bool same = true;
    for (std::size_t i = 0; i < d1.size(); ++i)
      same = same && d1[i].x[0] == d2[i].x[0] && d1[i].y[0] == d2[i].y[0];
    CHECK(same);
  }

  CHECK_THROWS_AS(sample_two_regime(10, 1.0, 2.0, 1.5, 0.5, rng), std::invalid_argument);
  CHECK_THROWS_AS(sample_two_regime(0, 1.0, 2.0, 0.2, 0.5, rng), std::invalid_argument);
}

TEST_CASE("dataset CSV round-trips bit-for-bit") {
  Rng rng(17);
  Dataset d;
  for (int i = 0; i < 50; ++i) {
    DataPoint p;
    p.x = rng.normal_vector(3);
    p.y = rng.normal_vector(2);
    d.points.push_back(std::move(p));
  }
  std::stringstream buffer;
  write_dataset_csv(buffer, d);

  std::string header;
  std::getline(buffer, header);
  CHECK(header == "x_0,x_1,x_2,y_0,y_1");
  buffer.seekg(0);

  const Dataset back = read_dataset_csv(buffer);
  REQUIRE(back.size() == d.size());
  bool same = true;
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (std::size_t k = 0; k < 3; ++k) same = same && back[i].x[k] == d[i].x[k];
    for (std::size_t k = 0; k < 2; ++k) same = same && back[i].y[k] == d[i].y[k];
  }
  CHECK(same);
}
