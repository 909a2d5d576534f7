#pragma once

#include "svrgld/models.hpp"
#include "svrgld/rng.hpp"

#include <vector>

namespace svrgld::testing {

// grad psi_i(x) = H_i x - c_i.
class AffineModel final : public ObjectiveModel {
 public:
  AffineModel(std::vector<Matrix> h, std::vector<Vector> c)
      : h_(std::move(h)), c_(std::move(c)) {
    mean_h_ = Matrix::Zero(h_[0].rows(), h_[0].cols());
    for (const auto& m : h_) mean_h_ += m / static_cast<double>(h_.size());
  }
  AffineModel(const Matrix& h, const Vector& c) : AffineModel(std::vector<Matrix>{h}, std::vector<Vector>{c}) {}
  explicit AffineModel(const Matrix& h)
      : AffineModel(h, Vector::Zero(h.rows())) {}

  std::size_t size() const override { return h_.size(); }
  std::size_t dim() const override { return static_cast<std::size_t>(h_[0].rows()); }
  void component_gradient(std::size_t i, const Vector& x,
                          Eigen::Ref<Vector> out) const override {
    out = h_[i] * x - c_[i];
  }
  Matrix hessian(const Vector&) const override { return mean_h_; }

 private:
  std::vector<Matrix> h_;
  std::vector<Vector> c_;
  Matrix mean_h_;
};

inline Matrix scalar_matrix(double v) { return Matrix::Constant(1, 1, v); }

inline Vector random_point(Eigen::Index d, Rng& rng, double scale = 1.0) {
  Vector v(d);
  for (Eigen::Index i = 0; i < d; ++i) v(i) = scale * rng.normal();
  return v;
}

inline Vector random_unit(Eigen::Index d, Rng& rng) {
  const Vector v = random_point(d, rng);
  return v / v.norm();
}

}  // namespace svrgld::testing
