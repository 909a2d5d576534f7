#include "svrgld/linalg.hpp"

#include "svrgld/error.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace svrgld {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidInput: return "InvalidInput";
    case ErrorCode::NotPSD: return "NotPSD";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::Diverged: return "Diverged";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

SymMatrix::SymMatrix(Matrix m) : m_(std::move(m)) {
  require(m_.rows() == m_.cols() && m_.rows() >= 1, ErrorCode::InvalidInput,
          "SymMatrix requires a non-empty square matrix");
  for (Eigen::Index j = 0; j < m_.cols(); ++j) {
    for (Eigen::Index i = 0; i < j; ++i) m_(i, j) = m_(j, i);
  }
}

SymMatrix SymMatrix::zero(std::size_t dim) {
  return SymMatrix(Matrix::Zero(static_cast<Eigen::Index>(dim),
                                static_cast<Eigen::Index>(dim)));
}

SymMatrix SymMatrix::identity(std::size_t dim) {
  return SymMatrix(Matrix::Identity(static_cast<Eigen::Index>(dim),
                                    static_cast<Eigen::Index>(dim)));
}

SymMatrix SymMatrix::diagonal(const Vector& diag) {
  return SymMatrix(Matrix(diag.asDiagonal()));
}

namespace {

void require_finite(const Matrix& m) {
  require(m.allFinite(), ErrorCode::InvalidInput,
          "matrix has non-finite entries");
}

}  // namespace

SpectralDecomposition eig_sym(const SymMatrix& m) {
  require_finite(m.matrix());
  if (m.dim() == 1) {
    return {Vector::Constant(1, m(0, 0)), Matrix::Identity(1, 1)};
  }
  Eigen::SelfAdjointEigenSolver<Matrix> solver(m.matrix(),
                                               Eigen::ComputeEigenvectors);
  require(solver.info() == Eigen::Success, ErrorCode::NoConvergence,
          "symmetric eigensolver failed");
  return {solver.eigenvalues(), solver.eigenvectors()};
}

SymMatrix psd_sqrt(const SymMatrix& m, double ridge) {
  require(ridge >= 0.0 && std::isfinite(ridge), ErrorCode::InvalidInput,
          "ridge must be finite and non-negative");
  const double floor = -1e-8 * m.frobenius();
  if (m.dim() == 1) {
    double lam = m(0, 0);
    require(std::isfinite(lam), ErrorCode::InvalidInput,
            "matrix has non-finite entries");
    if (lam < floor) {
      fail(ErrorCode::NotPSD,
           "eigenvalue " + std::to_string(lam) + " below PSD floor");
    }
    lam = std::max(lam, 0.0);
    return SymMatrix(Matrix::Constant(1, 1, std::sqrt(lam + ridge)));
  }
  const SpectralDecomposition eig = eig_sym(m);
  Vector root(eig.eigenvalues.size());
  for (Eigen::Index i = 0; i < root.size(); ++i) {
    const double lam = eig.eigenvalues(i);
    if (lam < floor) {
      fail(ErrorCode::NotPSD,
           "eigenvalue " + std::to_string(lam) + " below PSD floor");
    }
    root(i) = std::sqrt(std::max(lam, 0.0) + ridge);
  }
  const Matrix& v = eig.eigenvectors;
  return SymMatrix(v * root.asDiagonal() * v.transpose());
}

double lambda_min(const SymMatrix& m) { return eig_sym(m).eigenvalues(0); }

double operator_norm(const Matrix& m) {
  require_finite(m);
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

double fd_step(int order, double x_norm) {
  const double eps = std::numeric_limits<double>::epsilon();
  return std::pow(eps, 1.0 / (order + 2)) * (1.0 + x_norm);
}

Matrix directional_derivative(const MatrixField& f, const Vector& x,
                              std::span<const Vector> dirs) {
  const int order = static_cast<int>(dirs.size());
  require(order >= 1 && order <= 3, ErrorCode::InvalidInput,
          "directional_derivative supports orders 1..3");
  for (const Vector& v : dirs) {
    require(v.size() == x.size(), ErrorCode::InvalidInput,
            "direction dimension mismatch");
    require(std::abs(v.norm() - 1.0) <= 1e-12, ErrorCode::InvalidInput,
            "directions must be unit vectors");
  }
  const double h = fd_step(order, x.norm());
  // Sum over the 2^order sign patterns of the nested central stencil.
  Matrix acc;
  const int corners = 1 << order;
  for (int mask = 0; mask < corners; ++mask) {
    Vector p = x;
    int negatives = 0;
    for (int k = 0; k < order; ++k) {
      if (mask & (1 << k)) {
        p -= h * dirs[static_cast<std::size_t>(k)];
        ++negatives;
      } else {
        p += h * dirs[static_cast<std::size_t>(k)];
      }
    }
    Matrix val = f(p);
    if (negatives % 2 == 1) val = -val;
    if (mask == 0) {
      acc = std::move(val);
    } else {
      acc += val;
    }
  }
  return acc / std::pow(2.0 * h, order);
}

}  // namespace svrgld
