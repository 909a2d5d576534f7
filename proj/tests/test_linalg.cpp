#include "svrgld/error.hpp"
#include "svrgld/linalg.hpp"
#include "svrgld/models.hpp"
#include "svrgld/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

using namespace svrgld;

namespace {

Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
  }
  return m;
}

Vector unit(Vector v) { return v / v.norm(); }

}  // namespace

TEST(SymMatrix, MirrorsLowerTriangle) {
  Matrix m(2, 2);
  m << 1.0, 7.0, 3.0, 2.0;
  const SymMatrix s(m);
  EXPECT_EQ(s(0, 1), 3.0);
  EXPECT_EQ(s(1, 0), 3.0);
  EXPECT_THROW(SymMatrix(Matrix(2, 3)), Error);
}

TEST(EigSym, IdentityAndDiagonal) {
  const auto id = eig_sym(SymMatrix::identity(3));
  EXPECT_TRUE(id.eigenvalues.isApprox(Vector::Ones(3)));

  Vector diag(2);
  diag << 9.0, 4.0;
  const auto e = eig_sym(SymMatrix::diagonal(diag));
  EXPECT_DOUBLE_EQ(e.eigenvalues(0), 4.0);
  EXPECT_DOUBLE_EQ(e.eigenvalues(1), 9.0);
  EXPECT_NEAR(std::abs(e.eigenvectors(1, 0)), 1.0, 1e-15);
}

TEST(EigSym, RandomReconstruction) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix a = gaussian_matrix(6, 6, rng);
    const SymMatrix m(a + a.transpose());
    const auto e = eig_sym(m);
    const Matrix& v = e.eigenvectors;
    EXPECT_LE((v.transpose() * v - Matrix::Identity(6, 6)).cwiseAbs().maxCoeff(),
              1e-12);
    const Matrix rec = v * e.eigenvalues.asDiagonal() * v.transpose();
    EXPECT_LE((rec - m.matrix()).norm(), 1e-10 * (1.0 + m.frobenius()));
    for (Eigen::Index i = 1; i < 6; ++i) {
      EXPECT_LE(e.eigenvalues(i - 1), e.eigenvalues(i));
    }
  }
}

TEST(EigSym, RejectsNonFinite) {
  Matrix m = Matrix::Identity(2, 2);
  m(1, 1) = std::numeric_limits<double>::quiet_NaN();
  try {
    eig_sym(SymMatrix(m));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidInput);
  }
}

TEST(PsdSqrt, HandExamples) {
  const SymMatrix q0 = psd_sqrt(SymMatrix::zero(2), 4.0);
  EXPECT_TRUE(q0.matrix().isApprox(2.0 * Matrix::Identity(2, 2)));

  Vector diag(2);
  diag << 5.0, 12.0;
  const SymMatrix q = psd_sqrt(SymMatrix::diagonal(diag), 4.0);
  EXPECT_NEAR(q(0, 0), 3.0, 1e-14);
  EXPECT_NEAR(q(1, 1), 4.0, 1e-14);
  EXPECT_NEAR(q(0, 1), 0.0, 1e-14);
}

TEST(PsdSqrt, GramReconstructionAcrossDimensions) {
  Rng rng(5);
  for (int d = 1; d <= 8; ++d) {
    for (int trial = 0; trial < 25; ++trial) {
      const Matrix a = gaussian_matrix(d + 1, d, rng);
      const SymMatrix m(a.transpose() * a);
      const double ridge = trial % 5 == 0 ? 0.0 : 0.1 * trial;
      const SymMatrix q = psd_sqrt(m, ridge);
      const Matrix target =
          m.matrix() + ridge * Matrix::Identity(d, d);
      EXPECT_LE((q.matrix() * q.matrix() - target).norm(),
                1e-10 * (1.0 + m.frobenius() + ridge * std::sqrt(d)))
          << "d=" << d;
      EXPECT_EQ(q(0, d - 1), q(d - 1, 0));
    }
  }
}

TEST(PsdSqrt, CommutesWithOrthogonalConjugation) {
  Rng rng(8);
  for (int d = 2; d <= 6; ++d) {
    const Matrix a = gaussian_matrix(d, d, rng);
    const SymMatrix m(a.transpose() * a);
    const Matrix u = random_orthogonal(static_cast<std::size_t>(d), rng);
    const Matrix lhs =
        psd_sqrt(SymMatrix(u.transpose() * m.matrix() * u), 0.3).matrix();
    const Matrix rhs = u.transpose() * psd_sqrt(m, 0.3).matrix() * u;
    EXPECT_LE((lhs - rhs).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(PsdSqrt, ClampsRoundOffButRejectsRealNegatives) {
  Vector diag(2);
  diag << 1.0, -1e-12;
  const SymMatrix q = psd_sqrt(SymMatrix::diagonal(diag), 0.0);
  EXPECT_EQ(q(1, 1), 0.0);

  diag << 1.0, -1e-3;
  try {
    psd_sqrt(SymMatrix::diagonal(diag), 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotPSD);
  }
}

TEST(DirectionalDerivative, LinearMapsAreExact) {
  Rng rng(3);
  const Matrix h = gaussian_matrix(3, 3, rng);
  const MatrixField f = [&](const Vector& x) -> Matrix { return h * x; };
  const Vector x = Vector::Random(3);
  const Vector v = unit(Vector::Random(3));
  const Vector w = unit(Vector::Random(3));

  const Vector dirs1[] = {v};
  const Matrix d1 = directional_derivative(f, x, dirs1);
  EXPECT_LE((d1.col(0) - h * v).norm(), 1e-6 * h.norm());

  const Vector dirs2[] = {v, w};
  EXPECT_LE(directional_derivative(f, x, dirs2).norm(), 1e-4 * h.norm());
}

TEST(DirectionalDerivative, PolynomialsUpToOrder) {
  // f(x) = x0^3 + x0 x1^2, matrix-valued wrapper.
  const MatrixField f = [](const Vector& x) -> Matrix {
    return Matrix::Constant(1, 1, x(0) * x(0) * x(0) + x(0) * x(1) * x(1));
  };
  Vector x(2);
  x << 0.4, -0.7;
  const Vector e0 = Vector::Unit(2, 0);
  const Vector e1 = Vector::Unit(2, 1);

  const Vector o1[] = {e0};
  const double h1 = fd_step(1, x.norm());
  EXPECT_NEAR(directional_derivative(f, x, o1)(0, 0),
              3 * x(0) * x(0) + x(1) * x(1), 10 * h1 * h1);

  const Vector o2[] = {e0, e1};
  const double h2 = fd_step(2, x.norm());
  EXPECT_NEAR(directional_derivative(f, x, o2)(0, 0), 2 * x(1), 10 * h2 * h2);

  const Vector o3[] = {e0, e0, e0};
  const double h3 = fd_step(3, x.norm());
  EXPECT_NEAR(directional_derivative(f, x, o3)(0, 0), 6.0, 10 * h3 * h3);

  const Vector o3m[] = {e0, e1, e1};
  EXPECT_NEAR(directional_derivative(f, x, o3m)(0, 0), 2.0, 10 * h3 * h3);
}

TEST(DirectionalDerivative, StepExponents) {
  const double eps = std::numeric_limits<double>::epsilon();
  EXPECT_DOUBLE_EQ(fd_step(1, 0.0), std::cbrt(eps));
  EXPECT_DOUBLE_EQ(fd_step(2, 1.0), 2.0 * std::pow(eps, 0.25));
  EXPECT_DOUBLE_EQ(fd_step(3, 0.0), std::pow(eps, 0.2));
}

TEST(DirectionalDerivative, RejectsNonUnitDirections) {
  const MatrixField f = [](const Vector& x) -> Matrix { return x; };
  const Vector x = Vector::Zero(2);
  const Vector bad[] = {Vector::Constant(2, 1.0)};
  try {
    directional_derivative(f, x, bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidInput);
  }
}

TEST(CompensatedSum, RecoversCancelledLowBits) {
  CompensatedSum s;
  s.add(1e16);
  s.add(1.0);
  s.add(-1e16);
  EXPECT_EQ(s.value(), 1.0);
}

TEST(Rng, SubstreamsAreDistinctAndReproducible) {
  Rng a(42, 0, Stream::Gaussian), b(42, 0, Stream::Gaussian);
  Rng c(42, 0, Stream::Index), e(42, 1, Stream::Gaussian);
  const double x = a.normal();
  EXPECT_EQ(x, b.normal());
  EXPECT_NE(x, c.normal());
  EXPECT_NE(x, e.normal());
}
