#include "renyiflow/models.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "renyiflow/io.hpp"

namespace renyiflow {

namespace {

constexpr double kLogTwoPi = 1.8378770664093454836;

double gaussian_log_density(std::span<const double> y, std::span<const double> mean,
                            double sigma) {
  if (y.size() != mean.size()) throw std::invalid_argument("output dimension mismatch");
  double sq = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double r = y[i] - mean[i];
    sq += r * r;
  }
  const double d = static_cast<double>(y.size());
  return -0.5 * d * (kLogTwoPi + 2.0 * std::log(sigma)) - sq / (2.0 * sigma * sigma);
}

}  // namespace

std::optional<DenseMatrix> ConditionalModel::hessian_nll(std::span<const double>,
                                                         const DataPoint&) const {
  return std::nullopt;
}

std::vector<double> ConditionalModel::init_params(Rng& rng) const {
  return rng.normal_vector(param_dim());
}

void ConditionalModel::check_theta(std::span<const double> theta) const {
  if (theta.size() != param_dim())
    throw std::invalid_argument("parameter dimension mismatch");
  for (double v : theta)
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite parameter");
}

LinearGaussianTwoRegime::LinearGaussianTwoRegime(double sigma) : sigma_(sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be positive");
}

std::array<double, 2> LinearGaussianTwoRegime::feature_map(double x) {
  return {x, std::max(x, 0.0)};
}

double LinearGaussianTwoRegime::log_lik(std::span<const double> theta,
                                        const DataPoint& point) const {
  check_theta(theta);
  if (point.x.size() != 1 || point.y.size() != 1)
    throw std::invalid_argument("two-regime model expects scalar x and y");
  const auto phi = feature_map(point.x[0]);
  const double mean = phi[0] * theta[0] + phi[1] * theta[1];
  return gaussian_log_density(point.y, std::span<const double>(&mean, 1), sigma_);
}

std::vector<double> LinearGaussianTwoRegime::grad_log_lik(std::span<const double> theta,
                                                          const DataPoint& point) const {
  check_theta(theta);
  const auto phi = feature_map(point.x[0]);
  const double resid = point.y[0] - (phi[0] * theta[0] + phi[1] * theta[1]);
  const double scale = resid / (sigma_ * sigma_);
  return {scale * phi[0], scale * phi[1]};
}

std::optional<DenseMatrix> LinearGaussianTwoRegime::hessian_nll(std::span<const double> theta,
                                                                const DataPoint& point) const {
  check_theta(theta);
  const auto phi = feature_map(point.x[0]);
  DenseMatrix h(2, 2);
  const double inv_var = 1.0 / (sigma_ * sigma_);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) h(i, j) = phi[i] * phi[j] * inv_var;
  return h;
}

DiscreteTable::DiscreteTable(std::vector<std::string> labels, DenseMatrix likelihoods)
    : labels_(std::move(labels)), likelihoods_(std::move(likelihoods)) {
  if (labels_.size() != likelihoods_.rows())
    throw std::invalid_argument("label count must match table rows");
  if (likelihoods_.rows() == 0 || likelihoods_.cols() == 0)
    throw std::invalid_argument("empty likelihood table");
  for (double v : likelihoods_.data())
    if (!(v > 0.0 && v <= 1.0))
      throw std::invalid_argument("likelihood entries must lie in (0, 1]");
}

DiscreteTable DiscreteTable::generalist_specialists(double h, double eps, double m) {
  DenseMatrix table(3, 2);
  table(0, 0) = m;
  table(0, 1) = m;
  table(1, 0) = h;
  table(1, 1) = eps;
  table(2, 0) = eps;
  table(2, 1) = h;
  return DiscreteTable({"g", "a", "b"}, std::move(table));
}

double DiscreteTable::log_lik(std::size_t k, std::size_t i) const {
  if (k >= num_params() || i >= num_observations())
    throw std::out_of_range("discrete table index");
  return std::log(likelihoods_(k, i));
}

LowRankAdapterModel::LowRankAdapterModel(DenseMatrix base, std::size_t rank, double sigma)
    : base_(std::move(base)), rank_(rank), sigma_(sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be positive");
  if (rank_ == 0 || rank_ > std::min(base_.rows(), base_.cols()))
    throw std::invalid_argument("rank must satisfy 1 <= r <= min(d_out, d_in)");
}

DenseMatrix LowRankAdapterModel::effective_map(std::span<const double> theta) const {
  check_theta(theta);
  const std::size_t dout = d_out();
  const std::size_t din = d_in();
  DenseMatrix w = base_;
  // theta = [A row-major | B row-major]; W = W0 + A B^T.
  const double* a = theta.data();
  const double* b = theta.data() + dout * rank_;
  for (std::size_t i = 0; i < dout; ++i)
    for (std::size_t k = 0; k < din; ++k) {
      double s = 0.0;
      for (std::size_t j = 0; j < rank_; ++j) s += a[i * rank_ + j] * b[k * rank_ + j];
      w(i, k) += s;
    }
  return w;
}

std::vector<double> LowRankAdapterModel::mean(std::span<const double> theta,
                                              std::span<const double> x) const {
  return effective_map(theta).multiply(x);
}

double LowRankAdapterModel::log_lik(std::span<const double> theta,
                                    const DataPoint& point) const {
  if (point.x.size() != d_in() || point.y.size() != d_out())
    throw std::invalid_argument("data point dimension mismatch");
  const auto mu = mean(theta, point.x);
  return gaussian_log_density(point.y, mu, sigma_);
}

std::vector<double> LowRankAdapterModel::grad_log_lik(std::span<const double> theta,
                                                      const DataPoint& point) const {
  if (point.x.size() != d_in() || point.y.size() != d_out())
    throw std::invalid_argument("data point dimension mismatch");
  const std::size_t dout = d_out();
  const std::size_t din = d_in();
  const auto mu = mean(theta, point.x);
  const double inv_var = 1.0 / (sigma_ * sigma_);
  std::vector<double> resid(dout);
  for (std::size_t i = 0; i < dout; ++i) resid[i] = (point.y[i] - mu[i]) * inv_var;

  const double* a = theta.data();
  const double* b = theta.data() + dout * rank_;
  // t = B^T x, u = A^T resid.
  std::vector<double> t(rank_, 0.0), u(rank_, 0.0);
  for (std::size_t j = 0; j < rank_; ++j) {
    for (std::size_t k = 0; k < din; ++k) t[j] += b[k * rank_ + j] * point.x[k];
    for (std::size_t i = 0; i < dout; ++i) u[j] += a[i * rank_ + j] * resid[i];
  }

  std::vector<double> grad(param_dim(), 0.0);
  for (std::size_t i = 0; i < dout; ++i)
    for (std::size_t j = 0; j < rank_; ++j) grad[i * rank_ + j] = resid[i] * t[j];
  for (std::size_t k = 0; k < din; ++k)
    for (std::size_t j = 0; j < rank_; ++j)
      grad[dout * rank_ + k * rank_ + j] = point.x[k] * u[j];
  return grad;
}

std::optional<DenseMatrix> LowRankAdapterModel::hessian_nll(std::span<const double> theta,
                                                            const DataPoint& point) const {
  if (point.x.size() != d_in() || point.y.size() != d_out())
    throw std::invalid_argument("data point dimension mismatch");
  const std::size_t dout = d_out();
  const std::size_t din = d_in();
  const std::size_t dim = param_dim();
  const auto mu = mean(theta, point.x);
  const double inv_var = 1.0 / (sigma_ * sigma_);

  const double* a = theta.data();
  const double* b = theta.data() + dout * rank_;
  std::vector<double> t(rank_, 0.0);
  for (std::size_t j = 0; j < rank_; ++j)
    for (std::size_t k = 0; k < din; ++k) t[j] += b[k * rank_ + j] * point.x[k];
  std::vector<double> resid(dout);
  for (std::size_t i = 0; i < dout; ++i) resid[i] = point.y[i] - mu[i];

  const auto a_idx = [&](std::size_t i, std::size_t j) { return i * rank_ + j; };
  const auto b_idx = [&](std::size_t k, std::size_t j) { return dout * rank_ + k * rank_ + j; };

  DenseMatrix h(dim, dim);
  // Gauss-Newton blocks of the bilinear map plus the exact residual curvature
  // on the A-B cross block; the within-block second derivatives vanish.
  for (std::size_t i = 0; i < dout; ++i)
    for (std::size_t j = 0; j < rank_; ++j)
      for (std::size_t j2 = 0; j2 < rank_; ++j2)
        h(a_idx(i, j), a_idx(i, j2)) = inv_var * t[j] * t[j2];

  for (std::size_t j = 0; j < rank_; ++j)
    for (std::size_t j2 = 0; j2 < rank_; ++j2) {
      double ata = 0.0;
      for (std::size_t i = 0; i < dout; ++i) ata += a[a_idx(i, j)] * a[a_idx(i, j2)];
      for (std::size_t k = 0; k < din; ++k)
        for (std::size_t k2 = 0; k2 < din; ++k2)
          h(b_idx(k, j), b_idx(k2, j2)) += inv_var * point.x[k] * point.x[k2] * ata;
    }

  for (std::size_t i = 0; i < dout; ++i)
    for (std::size_t j = 0; j < rank_; ++j)
      for (std::size_t k = 0; k < din; ++k)
        for (std::size_t j2 = 0; j2 < rank_; ++j2) {
          double val = inv_var * t[j] * a[a_idx(i, j2)] * point.x[k];
          if (j == j2) val -= inv_var * resid[i] * point.x[k];
          h(a_idx(i, j), b_idx(k, j2)) += val;
          h(b_idx(k, j2), a_idx(i, j)) += val;
        }
  return h;
}

std::vector<double> LowRankAdapterModel::init_params(Rng&) const {
  return std::vector<double>(param_dim(), 0.0);
}

TinyMlp::TinyMlp(std::size_t d_in, std::size_t hidden, std::size_t d_out, double sigma)
    : d_in_(d_in), hidden_(hidden), d_out_(d_out), sigma_(sigma) {
  if (d_in_ == 0 || hidden_ == 0 || d_out_ == 0)
    throw std::invalid_argument("TinyMlp dimensions must be positive");
  if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be positive");
}

std::vector<double> TinyMlp::mean(std::span<const double> theta,
                                  std::span<const double> x) const {
  check_theta(theta);
  const double* w1 = theta.data();
  const double* b1 = w1 + hidden_ * d_in_;
  const double* w2 = b1 + hidden_;
  const double* b2 = w2 + d_out_ * hidden_;

  std::vector<double> act(hidden_);
  for (std::size_t h = 0; h < hidden_; ++h) {
    double s = b1[h];
    for (std::size_t k = 0; k < d_in_; ++k) s += w1[h * d_in_ + k] * x[k];
    act[h] = std::tanh(s);
  }
  std::vector<double> out(d_out_);
  for (std::size_t o = 0; o < d_out_; ++o) {
    double s = b2[o];
    for (std::size_t h = 0; h < hidden_; ++h) s += w2[o * hidden_ + h] * act[h];
    out[o] = s;
  }
  return out;
}

double TinyMlp::log_lik(std::span<const double> theta, const DataPoint& point) const {
  if (point.x.size() != d_in_ || point.y.size() != d_out_)
    throw std::invalid_argument("data point dimension mismatch");
  const auto mu = mean(theta, point.x);
  return gaussian_log_density(point.y, mu, sigma_);
}

std::vector<double> TinyMlp::grad_log_lik(std::span<const double> theta,
                                          const DataPoint& point) const {
  if (point.x.size() != d_in_ || point.y.size() != d_out_)
    throw std::invalid_argument("data point dimension mismatch");
  check_theta(theta);
  const double* w1 = theta.data();
  const double* b1 = w1 + hidden_ * d_in_;
  const double* w2 = b1 + hidden_;
  const double* b2 = w2 + d_out_ * hidden_;

  std::vector<double> act(hidden_);
  for (std::size_t h = 0; h < hidden_; ++h) {
    double s = b1[h];
    for (std::size_t k = 0; k < d_in_; ++k) s += w1[h * d_in_ + k] * point.x[k];
    act[h] = std::tanh(s);
  }
  const double inv_var = 1.0 / (sigma_ * sigma_);
  std::vector<double> resid(d_out_);
  for (std::size_t o = 0; o < d_out_; ++o) {
    double s = b2[o];
    for (std::size_t h = 0; h < hidden_; ++h) s += w2[o * hidden_ + h] * act[h];
    resid[o] = (point.y[o] - s) * inv_var;
  }
  // Backprop through the tanh layer.
  std::vector<double> dh(hidden_, 0.0);
  for (std::size_t h = 0; h < hidden_; ++h) {
    double s = 0.0;
    for (std::size_t o = 0; o < d_out_; ++o) s += w2[o * hidden_ + h] * resid[o];
    dh[h] = s * (1.0 - act[h] * act[h]);
  }

  std::vector<double> grad(param_dim(), 0.0);
  double* g_w1 = grad.data();
  double* g_b1 = g_w1 + hidden_ * d_in_;
  double* g_w2 = g_b1 + hidden_;
  double* g_b2 = g_w2 + d_out_ * hidden_;
  for (std::size_t h = 0; h < hidden_; ++h) {
    for (std::size_t k = 0; k < d_in_; ++k) g_w1[h * d_in_ + k] = dh[h] * point.x[k];
    g_b1[h] = dh[h];
  }
  for (std::size_t o = 0; o < d_out_; ++o) {
    for (std::size_t h = 0; h < hidden_; ++h) g_w2[o * hidden_ + h] = resid[o] * act[h];
    g_b2[o] = resid[o];
  }
  return grad;
}

std::vector<double> TinyMlp::init_params(Rng& rng) const {
  std::vector<double> theta(param_dim());
  const double s1 = 1.0 / std::sqrt(static_cast<double>(d_in_));
  const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden_));
  std::size_t pos = 0;
  for (std::size_t k = 0; k < hidden_ * d_in_ + hidden_; ++k) theta[pos++] = s1 * rng.normal();
  for (std::size_t k = 0; k < d_out_ * hidden_ + d_out_; ++k) theta[pos++] = s2 * rng.normal();
  return theta;
}

Dataset sample_two_regime(std::size_t n, double beta, double a, double epsilon, double sigma,
                          Rng& rng) {
  if (n == 0) throw std::invalid_argument("need at least one sample");
  if (!(epsilon >= 0.0 && epsilon < 1.0))
    throw std::invalid_argument("epsilon must lie in [0, 1)");
  if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be positive");

  Dataset d;
  d.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = rng.uniform(-1.0, 1.0);
    double slope = beta;
    if (x >= 0.0 && rng.next_double() < epsilon) slope = beta + a;
    const double y = slope * x + sigma * rng.normal();
    d.points.push_back({{x}, {y}});
  }
  return d;
}

void write_dataset_csv(std::ostream& os, const Dataset& dataset) {
  if (dataset.empty()) throw std::invalid_argument("cannot serialize an empty dataset");
  const std::size_t dx = dataset[0].x.size();
  const std::size_t dy = dataset[0].y.size();
  for (std::size_t i = 0; i < dx; ++i) os << (i ? "," : "") << "x_" << i;
  for (std::size_t i = 0; i < dy; ++i) os << ",y_" << i;
  os << '\n';
  for (const auto& p : dataset.points) {
    if (p.x.size() != dx || p.y.size() != dy)
      throw std::invalid_argument("ragged dataset rows");
    os << csv_row(p.x) << ',' << csv_row(p.y) << '\n';
  }
}

Dataset read_dataset_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("dataset CSV: missing header");
  std::size_t dx = 0, dy = 0;
  {
    std::stringstream header(line);
    std::string cell;
    while (std::getline(header, cell, ',')) {
      if (cell.rfind("x_", 0) == 0)
        ++dx;
      else if (cell.rfind("y_", 0) == 0)
        ++dy;
      else
        throw std::runtime_error("dataset CSV: unexpected column '" + cell + "'");
    }
  }
  if (dx == 0 || dy == 0) throw std::runtime_error("dataset CSV: need x_* and y_* columns");

  Dataset d;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string cell;
    DataPoint p;
    while (std::getline(row, cell, ',')) {
      const double v = std::stod(cell);
      if (p.x.size() < dx)
        p.x.push_back(v);
      else
        p.y.push_back(v);
    }
    if (p.x.size() != dx || p.y.size() != dy)
      throw std::runtime_error("dataset CSV: ragged row");
    d.points.push_back(std::move(p));
  }
  if (d.empty()) throw std::runtime_error("dataset CSV: no rows");
  return d;
}

}  // namespace renyiflow
