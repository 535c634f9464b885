#include "atrim/linalg.hpp"

#include <cmath>
#include <sstream>

namespace atrim {

std::string shape_str(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

double SeededRng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // u1 in (0, 1] so the log is finite.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * M_PI * u2;
  spare_ = r * std::sin(a);
  has_spare_ = true;
  return r * std::cos(a);
}

std::uint64_t SeededRng::below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("SeededRng::below: n must be positive");
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(a) + " * " + shape_str(b));
  }
  return a * b;
}

Matrix softmax_rows(const Matrix& m) {
  if (m.size() == 0) throw ShapeError("softmax_rows: empty matrix");
  Matrix out(m.rows(), m.cols());
  for (Index i = 0; i < m.rows(); ++i) {
    const double mx = m.row(i).maxCoeff();
    Eigen::ArrayXd e = (m.row(i).array() - mx).exp();
    out.row(i) = e / e.sum();
  }
  return out;
}

Matrix glorot_uniform(Index rows, Index cols, SeededRng& rng) {
  if (rows < 1 || cols < 1) throw ShapeError("glorot_uniform: need positive dims");
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = rng.uniform(-limit, limit);
  return m;
}

Matrix orthogonal(Index n, SeededRng& rng) {
  if (n < 1) throw ShapeError("orthogonal: need positive dim");
  Matrix a(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) a(i, j) = rng.normal();
  // Modified Gram-Schmidt, two passes to hold the 1e-10 orthogonality bound.
  for (int pass = 0; pass < 2; ++pass) {
    for (Index j = 0; j < n; ++j) {
      for (Index i = 0; i < j; ++i) {
        a.col(j) -= a.col(i).dot(a.col(j)) * a.col(i);
      }
      const double norm = a.col(j).norm();
      if (norm < 1e-12) {
        // A Gaussian draw is almost surely full rank; re-seed the column if not.
        for (Index i = 0; i < n; ++i) a(i, j) = rng.normal();
        --j;
        continue;
      }
      a.col(j) /= norm;
    }
  }
  return a;
}

Vector finite_diff_grad(const std::function<double(const Vector&)>& f,
                        const Vector& theta, double eps) {
  if (eps <= 0.0) throw std::invalid_argument("finite_diff_grad: eps must be positive");
  Vector grad(theta.size());
  Vector probe = theta;
  for (Index i = 0; i < theta.size(); ++i) {
    probe(i) = theta(i) + eps;
    const double fp = f(probe);
    probe(i) = theta(i) - eps;
    const double fm = f(probe);
    probe(i) = theta(i);
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericError("finite_diff_grad: non-finite evaluation at coordinate " + std::to_string(i));
    }
    grad(i) = (fp - fm) / (2.0 * eps);
  }
  return grad;
}

}  // namespace atrim
