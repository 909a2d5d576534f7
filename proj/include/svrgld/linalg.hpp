#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace svrgld {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Dense symmetric matrix. The lower triangle of whatever is passed in is
/// authoritative and gets mirrored, so entries(i,j) == entries(j,i) exactly.
class SymMatrix {
 public:
  SymMatrix() = default;
  explicit SymMatrix(Matrix m);

  static SymMatrix zero(std::size_t dim);
  static SymMatrix identity(std::size_t dim);
  static SymMatrix diagonal(const Vector& diag);

  std::size_t dim() const { return static_cast<std::size_t>(m_.rows()); }
  const Matrix& matrix() const { return m_; }
  double operator()(Eigen::Index i, Eigen::Index j) const { return m_(i, j); }

  double frobenius() const { return m_.norm(); }
  double trace() const { return m_.trace(); }

 private:
  Matrix m_;
};

struct SpectralDecomposition {
  Vector eigenvalues;   // ascending
  Matrix eigenvectors;  // orthonormal columns
};

SpectralDecomposition eig_sym(const SymMatrix& m);

/// Principal square root of (m + ridge*I) computed spectrally. Eigenvalues of
/// m in [-1e-8*||m||_F, 0) are treated as round-off and clamped to zero;
/// anything more negative raises NotPSD.
SymMatrix psd_sqrt(const SymMatrix& m, double ridge);

/// Smallest eigenvalue.
double lambda_min(const SymMatrix& m);

/// Operator (spectral) norm of a general square matrix.
double operator_norm(const Matrix& m);

/// Central finite-difference steps used by directional_derivative, as a
/// function of the order and the base point norm:
///   h_k = eps^{1/(k+2)} * (1 + |x|).
double fd_step(int order, double x_norm);

using MatrixField = std::function<Matrix(const Vector&)>;

/// Nested central-difference estimate of the mixed directional derivative
/// nabla_{v_k} ... nabla_{v_1} f(x) for order = dirs.size() in {1,2,3}.
/// Vector-valued maps return a d x 1 matrix.
Matrix directional_derivative(const MatrixField& f, const Vector& x,
                              std::span<const Vector> dirs);

/// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double v) {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v)) {
      comp_ += (sum_ - t) + v;
    } else {
      comp_ += (v - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

}  // namespace svrgld
