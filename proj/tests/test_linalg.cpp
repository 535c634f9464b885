#include <doctest.h>

#include "atrim/linalg.hpp"

#include <cmath>

using namespace atrim;

namespace {

Matrix random_matrix(Index rows, Index cols, SeededRng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = scale * rng.normal();
  return m;
}

// Entry-by-entry triple loop, independent of the library path.
Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix c = Matrix::Zero(a.rows(), b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < b.cols(); ++j)
      for (Index k = 0; k < a.cols(); ++k) c(i, j) += a(i, k) * b(k, j);
  return c;
}

}  // namespace

TEST_SUITE("linalg") {

TEST_CASE("matmul identity and hand cases") {
  Matrix m(2, 2);
  m << 1, 2, 3, 4;
  CHECK((matmul(Matrix::Identity(2, 2), m) - m).cwiseAbs().maxCoeff() == 0.0);

  Matrix a(1, 2), b(2, 1);
  a << 1, 2;
  b << 3, 4;
  CHECK(matmul(a, b)(0, 0) == 11.0);
}

TEST_CASE("matmul matches the triple-loop oracle") {
  SeededRng rng(7);
  const Matrix a = random_matrix(3, 4, rng);
  const Matrix b = random_matrix(4, 2, rng);
  CHECK((matmul(a, b) - naive_matmul(a, b)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("matmul names both shapes on mismatch") {
  const Matrix a = Matrix::Zero(3, 4);
  const Matrix b = Matrix::Zero(5, 2);
  CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("3x4"), ShapeError);
  try {
    matmul(a, b);
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("5x2") != std::string::npos);
  }
}

TEST_CASE("matmul is associative on random conformable triples") {
  SeededRng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Index n1 = 1 + rng.below(6), n2 = 1 + rng.below(6), n3 = 1 + rng.below(6),
                n4 = 1 + rng.below(6);
    const Matrix a = random_matrix(n1, n2, rng);
    const Matrix b = random_matrix(n2, n3, rng);
    const Matrix c = random_matrix(n3, n4, rng);
    const Matrix left = matmul(matmul(a, b), c);
    const Matrix right = matmul(a, matmul(b, c));
    const double denom = std::max(1.0, right.cwiseAbs().maxCoeff());
    CHECK((left - right).cwiseAbs().maxCoeff() / denom <= 1e-9);
  }
}

TEST_CASE("softmax symmetry and saturation") {
  Matrix flat(1, 3);
  flat << 0, 0, 0;
  const Matrix u = softmax_rows(flat);
  for (int j = 0; j < 3; ++j) CHECK(u(0, j) == doctest::Approx(1.0 / 3).epsilon(1e-15));

  Matrix sat(1, 3);
  sat << 1000, 0, 0;
  const Matrix s = softmax_rows(sat);
  CHECK(std::abs(s(0, 0) - 1.0) <= 1e-12);
  CHECK(s(0, 1) <= 1e-12);
  CHECK(s(0, 2) <= 1e-12);
}

TEST_CASE("softmax frozen high-precision values") {
  Matrix m(1, 3);
  m << 1, 2, 3;
  const Matrix s = softmax_rows(m);
  CHECK(s(0, 0) == doctest::Approx(0.090030573170380458).epsilon(1e-12));
  CHECK(s(0, 1) == doctest::Approx(0.24472847105479765).epsilon(1e-12));
  CHECK(s(0, 2) == doctest::Approx(0.66524095577482189).epsilon(1e-12));
}

TEST_CASE("softmax rows sum to one and shrug off row shifts") {
  SeededRng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix m = random_matrix(1 + rng.below(5), 1 + rng.below(7), rng, 50.0);
    const Matrix s = softmax_rows(m);
    for (Index i = 0; i < s.rows(); ++i) {
      CHECK(std::abs(s.row(i).sum() - 1.0) <= 1e-12);
      CHECK(s.row(i).minCoeff() >= 0.0);
    }
    Matrix shifted = m;
    const double c = rng.uniform(-100.0, 100.0);
    shifted.row(0).array() += c;
    CHECK((softmax_rows(shifted) - s).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("glorot bound is forced by the fan sum") {
  SeededRng rng(1);
  const Matrix tall = glorot_uniform(1, 5, rng);
  CHECK(tall.cwiseAbs().maxCoeff() <= 1.0);  // limit = sqrt(6/6) = 1
  const Matrix square = glorot_uniform(3, 3, rng);
  CHECK(square.cwiseAbs().maxCoeff() <= 1.0);

  for (int trial = 0; trial < 20; ++trial) {
    const Index r = 1 + rng.below(12), c = 1 + rng.below(12);
    const double limit = std::sqrt(6.0 / static_cast<double>(r + c));
    CHECK(glorot_uniform(r, c, rng).cwiseAbs().maxCoeff() <= limit);
  }
}

TEST_CASE("glorot sample mean sits near zero") {
  SeededRng rng(42);
  const Matrix m = glorot_uniform(100, 100, rng);
  const double limit = std::sqrt(6.0 / 200.0);
  // Uniform on [-L, L] has sd L/sqrt(3); the mean of 10^4 draws stays within
  // three standard errors.
  const double bound = 3.0 * (limit / std::sqrt(3.0)) / 100.0;
  CHECK(std::abs(m.mean()) <= bound);
}

TEST_CASE("orthogonal init satisfies its defining property") {
  SeededRng rng(5);
  const Matrix w1 = orthogonal(1, rng);
  CHECK(std::abs(std::abs(w1(0, 0)) - 1.0) <= 1e-12);

  for (Index n = 1; n <= 16; ++n) {
    const Matrix w = orthogonal(n, rng);
    const Matrix gram = w.transpose() * w;
    CHECK((gram - Matrix::Identity(n, n)).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("orthogonal singular values are unit by SVD oracle") {
  SeededRng rng(9);
  const Matrix w = orthogonal(8, rng);
  Eigen::JacobiSVD<Matrix> svd(w);
  CHECK((svd.singularValues().array() - 1.0).abs().maxCoeff() <= 1e-8);
}

TEST_CASE("finite differences recover analytic derivatives") {
  const Vector g1 = finite_diff_grad([](const Vector& t) { return t(0) * t(0); },
                                     Vector::Constant(1, 3.0));
  CHECK(g1(0) == doctest::Approx(6.0).epsilon(1e-6));

  Vector theta(2);
  theta << 2, 5;
  const Vector g2 = finite_diff_grad([](const Vector& t) { return t(0) * t(1); }, theta);
  CHECK(g2(0) == doctest::Approx(5.0).epsilon(1e-6));
  CHECK(g2(1) == doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("finite differences flag non-finite evaluations by coordinate") {
  // Finite at the base point and under coordinate-0 probes, NaN when the
  // second coordinate is pushed past 1.
  auto f = [](const Vector& t) { return std::log(1.0 - t(1)) + t(0); };
  Vector bad(2);
  bad << 0.0, 1.0 - 5e-6;
  CHECK_THROWS_WITH_AS(finite_diff_grad(f, bad), doctest::Contains("coordinate 1"), NumericError);
}

TEST_CASE("seeded generator replays exactly") {
  SeededRng a(123), b(123), c(124);
  bool all_equal = true, any_diff = false;
  for (int i = 0; i < 100; ++i) {
    const double ua = a.uniform(), ub = b.uniform(), uc = c.uniform();
    all_equal = all_equal && ua == ub;
    any_diff = any_diff || ua != uc;
  }
  CHECK(all_equal);
  CHECK(any_diff);

  SeededRng d(77), e(77);
  for (int i = 0; i < 100; ++i) CHECK(d.normal() == e.normal());
}

}  // TEST_SUITE
