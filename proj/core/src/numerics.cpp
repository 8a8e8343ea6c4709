#include "renyiflow/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace renyiflow {

namespace {

constexpr double kPi = 3.14159265358979323846;

void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

DenseMatrix DenseMatrix::diagonal(std::span<const double> entries) {
  DenseMatrix m(entries.size(), entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) m(i, i) = entries[i];
  return m;
}

DenseMatrix DenseMatrix::transposed() const {
  DenseMatrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

double DenseMatrix::frobenius_norm() const {
  double s = 0.0;
  for (double v : data_) s += v * v;
  return std::sqrt(s);
}

DenseMatrix& DenseMatrix::operator+=(const DenseMatrix& other) {
  require(rows_ == other.rows_ && cols_ == other.cols_, "matrix shape mismatch");
  for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += other.data_[k];
  return *this;
}

DenseMatrix& DenseMatrix::operator*=(double scale) {
  for (double& v : data_) v *= scale;
  return *this;
}

std::vector<double> DenseMatrix::multiply(std::span<const double> x) const {
  require(x.size() == cols_, "matrix-vector shape mismatch");
  std::vector<double> y(rows_, 0.0);
  for (std::size_t i = 0; i < rows_; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < cols_; ++j) s += (*this)(i, j) * x[j];
    y[i] = s;
  }
  return y;
}

DenseMatrix DenseMatrix::multiply(const DenseMatrix& other) const {
  require(cols_ == other.rows_, "matrix-matrix shape mismatch");
  DenseMatrix out(rows_, other.cols_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t k = 0; k < cols_; ++k) {
      const double a = (*this)(i, k);
      if (a == 0.0) continue;
      for (std::size_t j = 0; j < other.cols_; ++j) out(i, j) += a * other(k, j);
    }
  return out;
}

bool is_symmetric(const DenseMatrix& a, double rel_tol) {
  if (a.rows() != a.cols()) return false;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = i + 1; j < a.cols(); ++j) {
      const double gap = std::abs(a(i, j) - a(j, i));
      if (gap > rel_tol * std::max(1.0, std::abs(a(i, j)))) return false;
    }
  return true;
}

DenseMatrix symmetrize(const DenseMatrix& a) {
  require(a.rows() == a.cols(), "symmetrize needs a square matrix");
  DenseMatrix s(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) s(i, j) = 0.5 * (a(i, j) + a(j, i));
  return s;
}

double logsumexp(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("empty reduction");
  double m = -std::numeric_limits<double>::infinity();
  for (double v : values) {
    if (std::isnan(v) || v == std::numeric_limits<double>::infinity())
      throw std::invalid_argument("logsumexp: +inf or NaN entry");
    m = std::max(m, v);
  }
  if (m == -std::numeric_limits<double>::infinity()) return m;
  double s = 0.0;
  for (double v : values) s += std::exp(v - m);
  return m + std::log(s);
}

SymEig sym_eig(const DenseMatrix& a) {
  require(a.rows() == a.cols(), "sym_eig needs a square matrix");
  require(a.rows() <= 64, "sym_eig supports dimensions up to 64");
  if (!is_symmetric(a)) throw std::invalid_argument("sym_eig: matrix not symmetric");

  const std::size_t n = a.rows();
  DenseMatrix b = symmetrize(a);
  DenseMatrix v = DenseMatrix::identity(n);
  const double norm_a = b.frobenius_norm();

  auto off_norm = [&]() {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j) s += b(i, j) * b(i, j);
    return std::sqrt(s);
  };

  const int max_sweeps = 64;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    if (off_norm() <= 1e-12 * norm_a) break;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = b(p, q);
        if (apq == 0.0) continue;
        const double theta = (b(q, q) - b(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;

        for (std::size_t k = 0; k < n; ++k) {
          const double bkp = b(k, p);
          const double bkq = b(k, q);
          b(k, p) = c * bkp - s * bkq;
          b(k, q) = s * bkp + c * bkq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double bpk = b(p, k);
          const double bqk = b(q, k);
          b(p, k) = c * bpk - s * bqk;
          b(q, k) = s * bpk + c * bqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return b(i, i) < b(j, j); });

  SymEig out;
  out.values.resize(n);
  out.vectors = DenseMatrix(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    out.values[k] = b(order[k], order[k]);
    for (std::size_t i = 0; i < n; ++i) out.vectors(i, k) = v(i, order[k]);
  }
  return out;
}

DenseMatrix cholesky(const DenseMatrix& a) {
  require(a.rows() == a.cols(), "cholesky needs a square matrix");
  const std::size_t n = a.rows();
  DenseMatrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 0.0)) throw std::runtime_error("cholesky: matrix not positive definite");
    l(j, j) = std::sqrt(d);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / l(j, j);
    }
  }
  return l;
}

namespace {

// Solves L x = b (forward) or L^T x = b (backward) for lower-triangular L.
std::vector<double> solve_lower(const DenseMatrix& l, std::span<const double> b) {
  const std::size_t n = l.rows();
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * x[k];
    x[i] = s / l(i, i);
  }
  return x;
}

std::vector<double> solve_lower_transposed(const DenseMatrix& l, std::span<const double> b) {
  const std::size_t n = l.rows();
  std::vector<double> x(n);
  for (std::size_t ii = n; ii-- > 0;) {
    double s = b[ii];
    for (std::size_t k = ii + 1; k < n; ++k) s -= l(k, ii) * x[k];
    x[ii] = s / l(ii, ii);
  }
  return x;
}

}  // namespace

MinRayleigh generalized_min_rayleigh(const DenseMatrix& v, const DenseMatrix& j) {
  require(v.rows() == v.cols() && j.rows() == j.cols() && v.rows() == j.rows(),
          "generalized_min_rayleigh: shape mismatch");
  if (!is_symmetric(v)) throw std::invalid_argument("generalized_min_rayleigh: V not symmetric");
  if (!is_symmetric(j)) throw std::invalid_argument("generalized_min_rayleigh: J not symmetric");

  DenseMatrix l;
  try {
    l = cholesky(symmetrize(j));
  } catch (const std::runtime_error&) {
    throw std::runtime_error("Fisher matrix singular");
  }

  const std::size_t n = v.rows();
  // B = L^{-1} V L^{-T}, assembled column by column.
  DenseMatrix y(n, n);  // Y = L^{-1} V
  const DenseMatrix vs = symmetrize(v);
  for (std::size_t col = 0; col < n; ++col) {
    std::vector<double> rhs(n);
    for (std::size_t i = 0; i < n; ++i) rhs[i] = vs(i, col);
    const auto sol = solve_lower(l, rhs);
    for (std::size_t i = 0; i < n; ++i) y(i, col) = sol[i];
  }
  DenseMatrix b(n, n);  // B^T = L^{-1} Y^T, so B row i is the solve of Y row i
  for (std::size_t row = 0; row < n; ++row) {
    std::vector<double> rhs(n);
    for (std::size_t jj = 0; jj < n; ++jj) rhs[jj] = y(row, jj);
    const auto sol = solve_lower(l, rhs);
    for (std::size_t jj = 0; jj < n; ++jj) b(row, jj) = sol[jj];
  }

  const SymEig eig = sym_eig(symmetrize(b));
  std::vector<double> y_min(n);
  for (std::size_t i = 0; i < n; ++i) y_min[i] = eig.vectors(i, 0);
  std::vector<double> u = solve_lower_transposed(l, y_min);
  const double u_norm = norm(u);
  for (double& e : u) e /= u_norm;

  return MinRayleigh{eig.values[0], std::move(u)};
}

Rng::Rng(std::uint64_t seed, std::uint64_t stream) {
  inc_ = (stream << 1u) | 1u;
  state_ = 0u;
  next_u32();
  state_ += seed;
  next_u32();
}

std::uint32_t Rng::next_u32() {
  const std::uint64_t old = state_;
  state_ = old * 6364136223846793005ULL + inc_;
  const auto xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
  const auto rot = static_cast<std::uint32_t>(old >> 59u);
  return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t hi = next_u32();
  const std::uint64_t lo = next_u32();
  return (hi << 32u) | lo;
}

double Rng::next_double() {
  return static_cast<double>(next_u64() >> 11u) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

double Rng::normal() {
  // Box-Muller; two uniforms per draw keeps the stream layout fixed.
  const double u1 = 1.0 - next_double();  // in (0, 1]
  const double u2 = next_double();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

std::size_t Rng::uniform_index(std::size_t n) {
  require(n > 0, "uniform_index: empty range");
  // Rejection sampling keeps the draw unbiased for any n.
  const std::uint64_t span = std::numeric_limits<std::uint64_t>::max() / n * n;
  std::uint64_t u;
  do {
    u = next_u64();
  } while (u >= span);
  return static_cast<std::size_t>(u % n);
}

std::size_t Rng::categorical(std::span<const double> probs) {
  require(!probs.empty(), "categorical: empty distribution");
  const double u = next_double();
  double acc = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    acc += probs[k];
    if (u < acc) return k;
  }
  return probs.size() - 1;
}

std::vector<double> Rng::normal_vector(std::size_t n) {
  std::vector<double> out(n);
  for (double& v : out) v = normal();
  return out;
}

void Rng::shuffle(std::span<std::size_t> indices) {
  for (std::size_t i = indices.size(); i > 1; --i) {
    const std::size_t k = uniform_index(i);
    std::swap(indices[i - 1], indices[k]);
  }
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  // splitmix64 finalizer over the combined word.
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double dot(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double squared_norm(std::span<const double> a) { return dot(a, a); }

double norm(std::span<const double> a) { return std::sqrt(squared_norm(a)); }

}  // namespace renyiflow
