#pragma once

#include "svrgld/linalg.hpp"
#include "svrgld/rng.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

namespace svrgld {

enum class ModelKind { Quadratic = 1, Logistic = 2, Custom = 3 };

const char* to_string(ModelKind kind) noexcept;

/// Constants known analytically for a model instance, when there are any.
struct ModelMetadata {
  std::optional<double> smoothness;
  std::optional<double> gamma;
  std::optional<double> k;
  std::optional<Vector> minimizer;
};

/// Finite-sum objective P(x) = (1/n) sum_i psi_i(x), described through its
/// component gradients.
class ObjectiveModel {
 public:
  virtual ~ObjectiveModel() = default;

  virtual ModelKind kind() const { return ModelKind::Custom; }
  virtual std::size_t size() const = 0;
  virtual std::size_t dim() const = 0;

  virtual void component_gradient(std::size_t i, const Vector& x,
                                  Eigen::Ref<Vector> out) const = 0;

  /// grad psi_i(x) - grad psi_i(y).
  virtual void component_gradient_difference(std::size_t i, const Vector& x,
                                             const Vector& y,
                                             Eigen::Ref<Vector> out) const;

  /// Mean of the component gradients. The default enumerates i in ascending
  /// order with compensated summation.
  virtual void full_gradient(const Vector& x, Eigen::Ref<Vector> out) const;
  Vector full_gradient(const Vector& x) const;

  /// Hessian of P. The default differentiates full_gradient numerically.
  virtual Matrix hessian(const Vector& x) const;

  /// Noise covariance Sigma(x, y) of the variance-reduced estimator over a
  /// uniform component index. The default is sigma_enumerated().
  virtual SymMatrix covariance(const Vector& x, const Vector& y) const;

  /// Stationary point of P. The default runs damped Newton on |grad P|^2.
  virtual Vector minimizer() const;

  /// E_I |grad psi_I(x) - grad psi_I(y)|^4 over a uniform index. The default
  /// enumerates all components.
  virtual double mean_fourth_power_difference(const Vector& x,
                                              const Vector& y) const;

  virtual ModelMetadata metadata() const { return {}; }
};

/// psi_i(w) = 1/2 (R^T w)^T [D + diag(a_i)] (R^T w) with R orthogonal.
class QuadraticAlternateModel final : public ObjectiveModel {
 public:
  QuadraticAlternateModel(Matrix rotation, Vector eigenvalues, Matrix samples,
                          std::uint64_t seed);

  ModelKind kind() const override { return ModelKind::Quadratic; }
  std::size_t size() const override {
    return static_cast<std::size_t>(samples_.rows());
  }
  std::size_t dim() const override {
    return static_cast<std::size_t>(eigenvalues_.size());
  }

  void component_gradient(std::size_t i, const Vector& x,
                          Eigen::Ref<Vector> out) const override;
  void component_gradient_difference(std::size_t i, const Vector& x,
                                     const Vector& y,
                                     Eigen::Ref<Vector> out) const override;
  void full_gradient(const Vector& x, Eigen::Ref<Vector> out) const override;
  using ObjectiveModel::full_gradient;
  Matrix hessian(const Vector&) const override { return effective_hessian_; }
  SymMatrix covariance(const Vector& x, const Vector& y) const override;
  Vector minimizer() const override;
  double mean_fourth_power_difference(const Vector& x,
                                      const Vector& y) const override;
  ModelMetadata metadata() const override;

  const Matrix& rotation() const { return rotation_; }
  const Vector& eigenvalues() const { return eigenvalues_; }
  const Matrix& samples() const { return samples_; }
  std::uint64_t seed() const { return seed_; }

  /// H = R D R^T, the population Hessian.
  Matrix population_hessian() const;
  /// R [D + diag(mean a)] R^T, the Hessian of the sampled objective.
  const Matrix& effective_hessian() const { return effective_hessian_; }
  /// Empirical (1/n) covariance of the sample rows a_i.
  const Matrix& sample_covariance() const { return sample_cov_; }

 private:
  Matrix rotation_;
  Vector eigenvalues_;
  Matrix samples_;  // n x d, row i is a_i
  std::uint64_t seed_;
  Vector sample_mean_;
  Matrix sample_cov_;
  Matrix effective_hessian_;
  Matrix fourth_moment_;  // (1/n) sum_i b_i b_i^T with b_ij = (D_j + a_ij)^2
};

/// psi_i(w) = -[b_i a_i^T w - ln(1 + e^{a_i^T w})] + lambda/2 |w|^2.
class LogisticModel final : public ObjectiveModel {
 public:
  LogisticModel(Matrix features, Vector labels, double lambda,
                Vector true_param, std::uint64_t seed);

  ModelKind kind() const override { return ModelKind::Logistic; }
  std::size_t size() const override {
    return static_cast<std::size_t>(features_.rows());
  }
  std::size_t dim() const override {
    return static_cast<std::size_t>(features_.cols());
  }

  void component_gradient(std::size_t i, const Vector& x,
                          Eigen::Ref<Vector> out) const override;
  void component_gradient_difference(std::size_t i, const Vector& x,
                                     const Vector& y,
                                     Eigen::Ref<Vector> out) const override;
  Matrix hessian(const Vector& x) const override;
  ModelMetadata metadata() const override;

  double value(const Vector& x) const;

  const Matrix& features() const { return features_; }
  const Vector& labels() const { return labels_; }
  double lambda() const { return lambda_; }
  const Vector& true_param() const { return true_param_; }
  std::uint64_t seed() const { return seed_; }

  double label_mean() const { return labels_.mean(); }
  /// Empirical mean of |a_i|^p over the feature rows.
  double feature_moment(int p) const;

 private:
  Matrix features_;  // n x d
  Vector labels_;
  double lambda_;
  Vector true_param_;
  std::uint64_t seed_;
};

double sigmoid(double t);

/// Sigma(x, y) by explicit two-pass enumeration over all n components in
/// ascending order, whatever shortcut the model itself may implement.
SymMatrix sigma_enumerated(const ObjectiveModel& model, const Vector& x,
                           const Vector& y);

/// Sigma(x, y) through the model (may use an exact algebraic shortcut).
SymMatrix sigma(const ObjectiveModel& model, const Vector& x, const Vector& y);

/// Step size and noise scale of a run, bound to a model.
struct DiffusionSpec {
  const ObjectiveModel* model = nullptr;
  double eta = 0.0;
  double delta = 0.0;

  /// Throws InvalidConfig unless eta > 0, 0 <= delta <= 1 and, for
  /// delta > 0, eta <= delta.
  void validate() const;
  double ridge() const { return delta / eta; }
};

/// Q(x, y) = (Sigma(x, y) + (delta/eta) I)^{1/2}.
SymMatrix q_factor(const DiffusionSpec& spec, const Vector& x, const Vector& y);

/// Optional memo for q_factor keyed on the exact bytes of (x, y).
class QFactorCache {
 public:
  explicit QFactorCache(DiffusionSpec spec, std::size_t capacity = 1 << 14);

  SymMatrix get(const Vector& x, const Vector& y);
  std::size_t hits() const { return hits_; }
  std::size_t misses() const { return misses_; }

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_;
  DiffusionSpec spec_;
  std::size_t hits_ = 0;
  std::size_t misses_ = 0;
};

/// Which rotation sits inside diag(.) in the large-n closed form of Sigma for
/// the quadratic model: R^T (x - y) (rotation into the eigenbasis) or the
/// literal R (x - y).
enum class Orientation { Transposed, Literal };

/// R diag(u)^2 R^T with u = R^T(x - y) or R(x - y).
Matrix quadratic_sigma_closed_form(const QuadraticAlternateModel& model,
                                   const Vector& x, const Vector& y,
                                   Orientation orientation);

/// R [diag(u)^2 + (delta/eta) I]^{1/2} R^T.
Matrix quadratic_q_closed_form(const QuadraticAlternateModel& model,
                               const Vector& x, const Vector& y, double eta,
                               double delta, Orientation orientation);

std::unique_ptr<QuadraticAlternateModel> generate_quadratic_model(
    std::size_t d, std::size_t n, const Vector& eigenvalues,
    std::uint64_t seed);

std::unique_ptr<LogisticModel> generate_logistic_model(
    std::size_t d, std::size_t n, const Vector& true_param, double lambda,
    std::uint64_t seed);

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// signs of R's diagonal folded into Q.
Matrix random_orthogonal(std::size_t d, Rng& rng);

enum class ModelFormat { Binary, Text };

void save_model(const ObjectiveModel& model, const std::filesystem::path& path,
                ModelFormat format);
std::unique_ptr<ObjectiveModel> load_model(const std::filesystem::path& path);

}  // namespace svrgld
