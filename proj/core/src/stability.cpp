#include "renyiflow/stability.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "renyiflow/io.hpp"

namespace renyiflow {

namespace {

constexpr double kHessianFdStep = 1e-4;

DenseMatrix hessian_by_grad_differences(const ConditionalModel& model,
                                        std::span<const double> theta, const DataPoint& point) {
  const std::size_t d = theta.size();
  std::vector<double> work(theta.begin(), theta.end());
  DenseMatrix h(d, d);
  for (std::size_t k = 0; k < d; ++k) {
    const double saved = work[k];
    work[k] = saved + kHessianFdStep;
    const auto g_plus = model.grad_log_lik(work, point);
    work[k] = saved - kHessianFdStep;
    const auto g_minus = model.grad_log_lik(work, point);
    work[k] = saved;
    for (std::size_t i = 0; i < d; ++i)
      h(i, k) = -(g_plus[i] - g_minus[i]) / (2.0 * kHessianFdStep);
  }
  return symmetrize(h);
}

}  // namespace

std::pair<DenseMatrix, DenseMatrix> empirical_v_j(const ConditionalModel& model,
                                                  std::span<const double> theta,
                                                  const Dataset& dataset) {
  if (dataset.empty()) throw std::invalid_argument("empirical_v_j: empty dataset");
  const std::size_t d = model.param_dim();
  if (theta.size() != d) throw std::invalid_argument("parameter dimension mismatch");

  DenseMatrix v(d, d);
  DenseMatrix j(d, d);
  for (const auto& point : dataset.points) {
    auto h = model.hessian_nll(theta, point);
    if (!h) h = hessian_by_grad_differences(model, theta, point);
    v += *h;
    const auto g = model.grad_log_lik(theta, point);
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b) j(a, b) += g[a] * g[b];
  }
  const double inv_n = 1.0 / static_cast<double>(dataset.size());
  v *= inv_n;
  j *= inv_n;
  return {symmetrize(v), symmetrize(j)};
}

MinRayleigh alpha_critical(const DenseMatrix& v_hat, const DenseMatrix& j_hat) {
  try {
    return generalized_min_rayleigh(v_hat, j_hat);
  } catch (const std::runtime_error&) {
    const auto eig = sym_eig(symmetrize(j_hat));
    std::ostringstream msg;
    msg << "Fisher matrix singular (eigenvalue range [" << format_double(eig.values.front())
        << ", " << format_double(eig.values.back()) << "])";
    throw std::runtime_error(msg.str());
  }
}

double two_regime_alpha_critical_closed_form(double sigma, double epsilon, double a) {
  if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be positive");
  if (!(epsilon >= 0.0 && epsilon < 1.0))
    throw std::invalid_argument("epsilon must lie in [0, 1)");
  const double s2 = sigma * sigma;
  return 5.0 * s2 / (5.0 * s2 + 3.0 * epsilon * (1.0 - epsilon) * a * a);
}

double two_regime_pointwise_loss(std::span<const double> m, const DenseMatrix& sigma_mat,
                                 double alpha, double sigma, const DataPoint& point) {
  if (m.size() != 2 || sigma_mat.rows() != 2 || sigma_mat.cols() != 2)
    throw std::invalid_argument("two_regime_pointwise_loss: expects 2-dimensional inputs");
  if (!(alpha > 0.0 && alpha <= 1.0))
    throw std::invalid_argument("alpha must lie in (0, 1]");
  if (!is_symmetric(sigma_mat)) throw std::invalid_argument("Sigma must be symmetric");

  const auto phi = LinearGaussianTwoRegime::feature_map(point.x[0]);
  double v_q = 0.0;
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) v_q += phi[i] * sigma_mat(i, j) * phi[j];

  const double s2 = sigma * sigma;
  const double resid = point.y[0] - (phi[0] * m[0] + phi[1] * m[1]);
  return 0.5 * std::log(2.0 * 3.14159265358979323846 * s2) +
         std::log1p(alpha * v_q / s2) / (2.0 * alpha) +
         resid * resid / (2.0 * (s2 + alpha * v_q));
}

LocalExpansion local_expansion_check(const LinearGaussianTwoRegime& model,
                                     std::span<const double> theta, const DenseMatrix& u_shape,
                                     double s, double alpha, const Dataset& dataset) {
  if (dataset.empty()) throw std::invalid_argument("local_expansion_check: empty dataset");
  DenseMatrix sigma_mat = symmetrize(u_shape);
  sigma_mat *= s * s;

  const DenseMatrix zero(2, 2);
  double exact = 0.0;
  for (const auto& point : dataset.points) {
    exact += two_regime_pointwise_loss(theta, sigma_mat, alpha, model.sigma(), point) -
             two_regime_pointwise_loss(theta, zero, alpha, model.sigma(), point);
  }
  exact /= static_cast<double>(dataset.size());

  const auto [v_hat, j_hat] = empirical_v_j(model, theta, dataset);
  double predicted = 0.0;
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j)
      predicted += 0.5 * (v_hat(i, j) - alpha * j_hat(i, j)) * sigma_mat(j, i);

  LocalExpansion out;
  out.exact_delta = exact;
  out.predicted_delta = predicted;
  out.rel_err = (s == 0.0 && exact == 0.0)
                    ? 0.0
                    : std::abs(exact - predicted) / std::max(std::abs(exact), 1e-300);
  return out;
}

DenseMatrix prior_curvature_adjustment(const DenseMatrix& v_hat, const PriorSpec& prior,
                                       double lambda) {
  prior.validate();
  if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be non-negative");
  DenseMatrix adjusted = v_hat;
  const double curvature = lambda / (prior.tau * prior.tau);
  for (std::size_t i = 0; i < adjusted.rows(); ++i) adjusted(i, i) += curvature;
  return adjusted;
}

std::vector<VarianceProfilePoint> epistemic_variance_profile(std::span<const double> m,
                                                             const DenseMatrix& sigma_mat,
                                                             double sigma,
                                                             std::span<const double> xs) {
  if (m.size() != 2 || sigma_mat.rows() != 2 || sigma_mat.cols() != 2)
    throw std::invalid_argument("epistemic_variance_profile: expects 2-dimensional inputs");
  std::vector<VarianceProfilePoint> out;
  out.reserve(xs.size());
  for (double x : xs) {
    const auto phi = LinearGaussianTwoRegime::feature_map(x);
    double epi = 0.0;
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 2; ++j) epi += phi[i] * sigma_mat(i, j) * phi[j];
    VarianceProfilePoint p;
    p.x = x;
    p.mean = phi[0] * m[0] + phi[1] * m[1];
    p.epistemic_var = epi;
    p.total_var = sigma * sigma + epi;
    out.push_back(p);
  }
  return out;
}

StabilityReport make_stability_report(const ConditionalModel& model,
                                      std::span<const double> theta, const Dataset& dataset) {
  StabilityReport report;
  auto [v, j] = empirical_v_j(model, theta, dataset);
  const auto critical = alpha_critical(v, j);
  report.v_hat = std::move(v);
  report.j_hat = std::move(j);
  report.alpha_critical = critical.alpha_min;
  report.principal_direction = critical.direction;
  report.n_samples = dataset.size();
  report.theta_eval.assign(theta.begin(), theta.end());
  return report;
}

namespace {

void append_matrix(std::ostringstream& os, const DenseMatrix& m) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    if (i) os << " ; ";
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (j) os << ' ';
      os << format_double(m(i, j));
    }
  }
}

void append_vector(std::ostringstream& os, std::span<const double> v) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) os << ' ';
    os << format_double(v[i]);
  }
}

}  // namespace

std::string format_stability_report(const StabilityReport& report) {
  std::ostringstream os;
  os << "alpha_critical = " << format_double(report.alpha_critical) << '\n';
  os << "direction = ";
  append_vector(os, report.principal_direction);
  os << '\n';
  os << "v_hat = ";
  append_matrix(os, report.v_hat);
  os << '\n';
  os << "j_hat = ";
  append_matrix(os, report.j_hat);
  os << '\n';
  os << "n_samples = " << report.n_samples << '\n';
  os << "theta_eval = ";
  append_vector(os, report.theta_eval);
  os << '\n';
  return os.str();
}

}  // namespace renyiflow
