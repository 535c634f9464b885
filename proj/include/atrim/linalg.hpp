#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace atrim {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Thrown when operand shapes do not conform; the message names both shapes.
class ShapeError : public std::invalid_argument {
 public:
  explicit ShapeError(const std::string& what) : std::invalid_argument(what) {}
};

/// Thrown when a numeric routine meets a non-finite value.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

std::string shape_str(const Matrix& m);

inline double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

/// Deterministic 64-bit generator. The raw stream comes from std::mt19937_64,
/// which the standard pins down bit for bit; uniform and normal draws are
/// derived here instead of via std::*_distribution so that sequences do not
/// depend on the standard-library build.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal, Box-Muller.
  double normal();

  /// Uniform integer on [0, n), rejection-free of modulo bias.
  std::uint64_t below(std::uint64_t n);

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

template <typename T>
void shuffle(std::vector<T>& items, SeededRng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::swap(items[i - 1], items[rng.below(i)]);
  }
}

/// Shape-checked matrix product.
Matrix matmul(const Matrix& a, const Matrix& b);

/// Row-wise softmax with per-row max subtraction for overflow safety.
Matrix softmax_rows(const Matrix& m);

/// Entries i.i.d. uniform on [-L, L] with L = sqrt(6 / (rows + cols)).
Matrix glorot_uniform(Index rows, Index cols, SeededRng& rng);

/// Random orthogonal matrix: modified Gram-Schmidt over a seeded Gaussian
/// square draw. Satisfies |W^T W - I|_max <= 1e-10.
Matrix orthogonal(Index n, SeededRng& rng);

/// Central-difference gradient (f(x+eps e_i) - f(x-eps e_i)) / (2 eps).
/// Throws NumericError naming the coordinate if f returns a non-finite value.
Vector finite_diff_grad(const std::function<double(const Vector&)>& f,
                        const Vector& theta, double eps = 1e-5);

}  // namespace atrim
