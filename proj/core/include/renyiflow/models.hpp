#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "renyiflow/numerics.hpp"

namespace renyiflow {

struct DataPoint {
  std::vector<double> x;
  std::vector<double> y;
};

struct Dataset {
  std::vector<DataPoint> points;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  const DataPoint& operator[](std::size_t i) const { return points[i]; }
};

/// Conditional likelihood family p_theta(y|x) with parameter gradients and,
/// where available, analytic Hessians of the negative log-likelihood.
class ConditionalModel {
 public:
  virtual ~ConditionalModel() = default;

  virtual std::size_t param_dim() const = 0;
  virtual double log_lik(std::span<const double> theta, const DataPoint& point) const = 0;
  virtual std::vector<double> grad_log_lik(std::span<const double> theta,
                                           const DataPoint& point) const = 0;

  /// Hessian of -log p_theta(y|x), or nullopt when no analytic form exists
  /// (callers fall back to differentiating the gradient).
  virtual std::optional<DenseMatrix> hessian_nll(std::span<const double> theta,
                                                 const DataPoint& point) const;

  /// Base parameter draw used by ensemble initialization.
  virtual std::vector<double> init_params(Rng& rng) const;

 protected:
  void check_theta(std::span<const double> theta) const;
};

/// Gaussian regression y ~ N(phi(x)^T theta, sigma^2) with phi(x) = (x, x_+),
/// scalar x and y, theta in R^2. The second feature activates only on the
/// positive half-line.
class LinearGaussianTwoRegime : public ConditionalModel {
 public:
  explicit LinearGaussianTwoRegime(double sigma);

  static std::array<double, 2> feature_map(double x);

  double sigma() const { return sigma_; }

  std::size_t param_dim() const override { return 2; }
  double log_lik(std::span<const double> theta, const DataPoint& point) const override;
  std::vector<double> grad_log_lik(std::span<const double> theta,
                                   const DataPoint& point) const override;
  std::optional<DenseMatrix> hessian_nll(std::span<const double> theta,
                                         const DataPoint& point) const override;

 private:
  double sigma_;
};

/// Finite parameter table: K labelled parameters, N observations, likelihood
/// entries in (0, 1]. Drives the discrete self-consistency solver.
class DiscreteTable {
 public:
  DiscreteTable(std::vector<std::string> labels, DenseMatrix likelihoods);

  /// The generalist/specialist table: rows (g, a, b) over two observations
  /// with likelihoods (m, m), (h, eps), (eps, h).
  static DiscreteTable generalist_specialists(double h, double eps, double m);

  std::size_t num_params() const { return likelihoods_.rows(); }
  std::size_t num_observations() const { return likelihoods_.cols(); }

  const std::string& label(std::size_t k) const { return labels_[k]; }
  double likelihood(std::size_t k, std::size_t i) const { return likelihoods_(k, i); }
  double log_lik(std::size_t k, std::size_t i) const;

 private:
  std::vector<std::string> labels_;
  DenseMatrix likelihoods_;
};

/// Gaussian linear map with a frozen base and a trainable low-rank update:
/// y ~ N((W0 + A B^T) x, sigma^2 I). Parameters flatten A (d_out x r,
/// row-major) followed by B (d_in x r, row-major). The zero adapter
/// reproduces the frozen base exactly.
class LowRankAdapterModel : public ConditionalModel {
 public:
  LowRankAdapterModel(DenseMatrix base, std::size_t rank, double sigma);

  std::size_t d_out() const { return base_.rows(); }
  std::size_t d_in() const { return base_.cols(); }
  std::size_t rank() const { return rank_; }
  double sigma() const { return sigma_; }
  const DenseMatrix& base() const { return base_; }

  DenseMatrix effective_map(std::span<const double> theta) const;
  std::vector<double> mean(std::span<const double> theta, std::span<const double> x) const;

  std::size_t param_dim() const override { return rank_ * (base_.rows() + base_.cols()); }
  double log_lik(std::span<const double> theta, const DataPoint& point) const override;
  std::vector<double> grad_log_lik(std::span<const double> theta,
                                   const DataPoint& point) const override;
  std::optional<DenseMatrix> hessian_nll(std::span<const double> theta,
                                         const DataPoint& point) const override;
  std::vector<double> init_params(Rng& rng) const override;  // zero adapter

 private:
  DenseMatrix base_;
  std::size_t rank_;
  double sigma_;
};

/// One-hidden-layer tanh network with a fixed-variance Gaussian head.
/// Parameters flatten W1 (H x d_in), b1, W2 (d_out x H), b2.
class TinyMlp : public ConditionalModel {
 public:
  TinyMlp(std::size_t d_in, std::size_t hidden, std::size_t d_out, double sigma);

  std::size_t hidden() const { return hidden_; }
  double sigma() const { return sigma_; }

  std::vector<double> mean(std::span<const double> theta, std::span<const double> x) const;

  std::size_t param_dim() const override {
    return hidden_ * (d_in_ + d_out_) + hidden_ + d_out_;
  }
  double log_lik(std::span<const double> theta, const DataPoint& point) const override;
  std::vector<double> grad_log_lik(std::span<const double> theta,
                                   const DataPoint& point) const override;
  std::vector<double> init_params(Rng& rng) const override;  // N(0, 1/fan_in)

 private:
  std::size_t d_in_;
  std::size_t hidden_;
  std::size_t d_out_;
  double sigma_;
};

/// Draws n points from the two-regime law: X ~ Unif[-1,1], clean slope beta,
/// and on x >= 0 a contaminated component of weight epsilon with slope
/// beta + a. epsilon may be 0 (clean limit).
Dataset sample_two_regime(std::size_t n, double beta, double a, double epsilon, double sigma,
                          Rng& rng);

/// CSV with header x_0..x_{d-1},y_0..y_{k-1}, '.' decimal, '\n' line ends.
void write_dataset_csv(std::ostream& os, const Dataset& dataset);
Dataset read_dataset_csv(std::istream& is);

}  // namespace renyiflow
