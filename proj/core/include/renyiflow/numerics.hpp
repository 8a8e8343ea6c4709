#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace renyiflow {

/// Dense row-major matrix of doubles. Small sizes only (the eigensolver is
/// specified for dimensions up to 64).
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);

  static DenseMatrix identity(std::size_t n);
  static DenseMatrix diagonal(std::span<const double> entries);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }

  DenseMatrix transposed() const;
  double frobenius_norm() const;

  DenseMatrix& operator+=(const DenseMatrix& other);
  DenseMatrix& operator*=(double scale);

  std::vector<double> multiply(std::span<const double> x) const;
  DenseMatrix multiply(const DenseMatrix& other) const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// |A_ij - A_ji| <= rel_tol * max(1, |A_ij|) for all pairs.
bool is_symmetric(const DenseMatrix& a, double rel_tol = 1e-12);

/// (A + A^T) / 2.
DenseMatrix symmetrize(const DenseMatrix& a);

/// log(sum_k exp(v_k)) via max-shift. Entries may be -inf; +inf and NaN are
/// rejected, as is an empty input ("empty reduction").
double logsumexp(std::span<const double> values);

struct SymEig {
  std::vector<double> values;  // ascending
  DenseMatrix vectors;         // column k pairs with values[k]; orthonormal
};

/// Cyclic Jacobi eigensolver for symmetric matrices, dimension <= 64.
/// Converges when the off-diagonal Frobenius norm drops below 1e-12 * ||A||_F.
SymEig sym_eig(const DenseMatrix& a);

/// Lower-triangular L with A = L L^T. Throws if A is not positive definite.
DenseMatrix cholesky(const DenseMatrix& a);

struct MinRayleigh {
  double alpha_min = 0.0;
  std::vector<double> direction;  // unit-normalized minimizer
};

/// min_u (u^T V u) / (u^T J u) via J = L L^T and the symmetric eigenproblem of
/// L^{-1} V L^{-T}. J must be positive definite ("Fisher matrix singular").
MinRayleigh generalized_min_rayleigh(const DenseMatrix& v, const DenseMatrix& j);

/// PCG-style generator (XSH-RR 64/32, fixed constants) so streams are
/// identical across platforms for a given seed. Single-owner: one stream per
/// logical task, never shared between threads.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint32_t next_u32();
  std::uint64_t next_u64();

  double next_double();                  // uniform on [0, 1), 53-bit
  double uniform(double lo, double hi);  // uniform on [lo, hi)
  double normal();                       // standard normal, Box-Muller
  std::size_t uniform_index(std::size_t n);
  std::size_t categorical(std::span<const double> probs);

  std::vector<double> normal_vector(std::size_t n);
  void shuffle(std::span<std::size_t> indices);

 private:
  std::uint64_t state_;
  std::uint64_t inc_;
};

/// Derives an independent sub-stream seed (splitmix64 mix of seed and salt).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

double dot(std::span<const double> a, std::span<const double> b);
double squared_norm(std::span<const double> a);
double norm(std::span<const double> a);

}  // namespace renyiflow
