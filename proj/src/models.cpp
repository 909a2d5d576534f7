#include "svrgld/models.hpp"

#include "svrgld/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <unordered_map>
#include <vector>

namespace svrgld {

const char* to_string(ModelKind kind) noexcept {
  switch (kind) {
    case ModelKind::Quadratic: return "quadratic";
    case ModelKind::Logistic: return "logistic";
    case ModelKind::Custom: return "custom";
  }
  return "custom";
}

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

// ---------------------------------------------------------------------------
// ObjectiveModel defaults

void ObjectiveModel::component_gradient_difference(std::size_t i,
                                                   const Vector& x,
                                                   const Vector& y,
                                                   Eigen::Ref<Vector> out) const {
  Vector gy(static_cast<Eigen::Index>(dim()));
  component_gradient(i, x, out);
  component_gradient(i, y, gy);
  out -= gy;
}

void ObjectiveModel::full_gradient(const Vector& x,
                                   Eigen::Ref<Vector> out) const {
  const auto d = static_cast<Eigen::Index>(dim());
  std::vector<CompensatedSum> acc(static_cast<std::size_t>(d));
  Vector g(d);
  const std::size_t n = size();
  for (std::size_t i = 0; i < n; ++i) {
    component_gradient(i, x, g);
    for (Eigen::Index j = 0; j < d; ++j) {
      acc[static_cast<std::size_t>(j)].add(g(j));
    }
  }
  for (Eigen::Index j = 0; j < d; ++j) {
    out(j) = acc[static_cast<std::size_t>(j)].value() / static_cast<double>(n);
  }
}

Vector ObjectiveModel::full_gradient(const Vector& x) const {
  Vector out(static_cast<Eigen::Index>(dim()));
  full_gradient(x, out);
  return out;
}

Matrix ObjectiveModel::hessian(const Vector& x) const {
  const auto d = static_cast<Eigen::Index>(dim());
  Matrix h(d, d);
  const MatrixField grad = [this](const Vector& p) -> Matrix {
    return full_gradient(p);
  };
  for (Eigen::Index j = 0; j < d; ++j) {
    const Vector e = Vector::Unit(d, j);
    h.col(j) = directional_derivative(grad, x, std::span<const Vector>(&e, 1)).col(0);
  }
  return 0.5 * (h + h.transpose());
}

SymMatrix ObjectiveModel::covariance(const Vector& x, const Vector& y) const {
  return sigma_enumerated(*this, x, y);
}

Vector ObjectiveModel::minimizer() const {
  const auto d = static_cast<Eigen::Index>(dim());
  Vector x = Vector::Zero(d);
  constexpr int kMaxIterations = 200;
  for (int it = 0; it < kMaxIterations; ++it) {
    const Vector g = full_gradient(x);
    const double gnorm = g.norm();
    if (gnorm <= 1e-10) return x;
    const Vector step = hessian(x).ldlt().solve(g);
    double t = 1.0;
    Vector trial = x - step;
    while (full_gradient(trial).norm() > (1.0 - 1e-4 * t) * gnorm &&
           t > 1e-12) {
      t *= 0.5;
      trial = x - t * step;
    }
    x = trial;
  }
  if (full_gradient(x).norm() <= 1e-10) return x;
  fail(ErrorCode::NoConvergence,
       "Newton iteration did not reach |grad P| <= 1e-10 in 200 steps");
}

double ObjectiveModel::mean_fourth_power_difference(const Vector& x,
                                                    const Vector& y) const {
  Vector g(static_cast<Eigen::Index>(dim()));
  CompensatedSum s;
  for (std::size_t i = 0; i < size(); ++i) {
    component_gradient_difference(i, x, y, g);
    const double r2 = g.squaredNorm();
    s.add(r2 * r2);
  }
  return s.value() / static_cast<double>(size());
}

// ---------------------------------------------------------------------------
// Quadratic alternate model

QuadraticAlternateModel::QuadraticAlternateModel(Matrix rotation,
                                                 Vector eigenvalues,
                                                 Matrix samples,
                                                 std::uint64_t seed)
    : rotation_(std::move(rotation)),
      eigenvalues_(std::move(eigenvalues)),
      samples_(std::move(samples)),
      seed_(seed) {
  const Eigen::Index d = eigenvalues_.size();
  require(d >= 1, ErrorCode::InvalidInput, "dimension must be >= 1");
  require(samples_.rows() >= 1, ErrorCode::InvalidInput,
          "need at least one component");
  require(rotation_.rows() == d && rotation_.cols() == d &&
              samples_.cols() == d,
          ErrorCode::InvalidInput, "quadratic model shape mismatch");
  for (Eigen::Index j = 0; j < d; ++j) {
    require(eigenvalues_(j) > 0.0 && std::isfinite(eigenvalues_(j)),
            ErrorCode::InvalidInput, "eigenvalues must be positive");
  }
  const double orth =
      (rotation_.transpose() * rotation_ - Matrix::Identity(d, d))
          .cwiseAbs()
          .maxCoeff();
  require(orth <= 1e-12, ErrorCode::InvalidInput,
          "rotation is not orthogonal to 1e-12");
  require(samples_.allFinite(), ErrorCode::InvalidInput,
          "samples must be finite");

  const Eigen::Index n = samples_.rows();
  const double inv_n = 1.0 / static_cast<double>(n);
  sample_mean_.resize(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    CompensatedSum s;
    for (Eigen::Index i = 0; i < n; ++i) s.add(samples_(i, j));
    sample_mean_(j) = s.value() * inv_n;
  }
  sample_cov_.resize(d, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    for (Eigen::Index k = 0; k <= j; ++k) {
      CompensatedSum s;
      for (Eigen::Index i = 0; i < n; ++i) {
        s.add((samples_(i, j) - sample_mean_(j)) *
              (samples_(i, k) - sample_mean_(k)));
      }
      sample_cov_(j, k) = sample_cov_(k, j) = s.value() * inv_n;
    }
  }
  fourth_moment_.resize(d, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    for (Eigen::Index k = 0; k <= j; ++k) {
      CompensatedSum s;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double bj = eigenvalues_(j) + samples_(i, j);
        const double bk = eigenvalues_(k) + samples_(i, k);
        s.add(bj * bj * bk * bk);
      }
      fourth_moment_(j, k) = fourth_moment_(k, j) = s.value() * inv_n;
    }
  }
  const Vector diag = eigenvalues_ + sample_mean_;
  const Matrix h = rotation_ * diag.asDiagonal() * rotation_.transpose();
  effective_hessian_ = 0.5 * (h + h.transpose());
}

void QuadraticAlternateModel::component_gradient(std::size_t i,
                                                 const Vector& x,
                                                 Eigen::Ref<Vector> out) const {
  const auto row = static_cast<Eigen::Index>(i);
  const Vector z = rotation_.transpose() * x;
  out.noalias() = rotation_ * ((eigenvalues_ + samples_.row(row).transpose())
                                   .cwiseProduct(z));
}

void QuadraticAlternateModel::component_gradient_difference(
    std::size_t i, const Vector& x, const Vector& y,
    Eigen::Ref<Vector> out) const {
  const auto row = static_cast<Eigen::Index>(i);
  const Vector z = rotation_.transpose() * (x - y);
  out.noalias() = rotation_ * ((eigenvalues_ + samples_.row(row).transpose())
                                   .cwiseProduct(z));
}

void QuadraticAlternateModel::full_gradient(const Vector& x,
                                            Eigen::Ref<Vector> out) const {
  out.noalias() = effective_hessian_ * x;
}

SymMatrix QuadraticAlternateModel::covariance(const Vector& x,
                                              const Vector& y) const {
  // g_i - mean g = R diag(u) (a_i - mean a) with u = R^T (x - y), so the
  // enumerated covariance collapses to R diag(u) C_a diag(u) R^T exactly.
  const Vector u = rotation_.transpose() * (x - y);
  const Matrix inner = u.asDiagonal() * sample_cov_ * u.asDiagonal();
  return SymMatrix(rotation_ * inner * rotation_.transpose());
}

Vector QuadraticAlternateModel::minimizer() const {
  const Vector eig = eig_sym(SymMatrix(effective_hessian_)).eigenvalues;
  const double scale = eig.cwiseAbs().maxCoeff();
  require(eig.cwiseAbs().minCoeff() > 1e-12 * scale, ErrorCode::NoConvergence,
          "averaged quadratic form is singular");
  return Vector::Zero(eigenvalues_.size());
}

double QuadraticAlternateModel::mean_fourth_power_difference(
    const Vector& x, const Vector& y) const {
  // |(D + a_i) o u|^2 = sum_j b_ij u_j^2, so the mean fourth power is a
  // quadratic form in (u_j^2) with the precomputed moment matrix.
  const Vector w = (rotation_.transpose() * (x - y)).cwiseAbs2();
  return w.dot(fourth_moment_ * w);
}

ModelMetadata QuadraticAlternateModel::metadata() const {
  ModelMetadata meta;
  const double lmin =
      eig_sym(SymMatrix(effective_hessian_)).eigenvalues(0);
  if (lmin > 0.0) {
    meta.gamma = lmin;
    meta.k = 0.0;
    meta.minimizer = Vector::Zero(eigenvalues_.size());
  }
  return meta;
}

Matrix QuadraticAlternateModel::population_hessian() const {
  return rotation_ * eigenvalues_.asDiagonal() * rotation_.transpose();
}

// ---------------------------------------------------------------------------
// Logistic model

LogisticModel::LogisticModel(Matrix features, Vector labels, double lambda,
                             Vector true_param, std::uint64_t seed)
    : features_(std::move(features)),
      labels_(std::move(labels)),
      lambda_(lambda),
      true_param_(std::move(true_param)),
      seed_(seed) {
  require(lambda_ > 0.0 && std::isfinite(lambda_), ErrorCode::InvalidInput,
          "lambda must be positive");
  require(features_.rows() >= 1 && features_.cols() >= 1,
          ErrorCode::InvalidInput, "need at least one sample and dimension");
  require(labels_.size() == features_.rows(), ErrorCode::InvalidInput,
          "label count mismatch");
  require(true_param_.size() == features_.cols(), ErrorCode::InvalidInput,
          "true parameter dimension mismatch");
  for (Eigen::Index i = 0; i < labels_.size(); ++i) {
    require(labels_(i) == 0.0 || labels_(i) == 1.0, ErrorCode::InvalidInput,
            "labels must be 0 or 1");
  }
  require(features_.allFinite(), ErrorCode::InvalidInput,
          "features must be finite");
}

void LogisticModel::component_gradient(std::size_t i, const Vector& x,
                                       Eigen::Ref<Vector> out) const {
  const auto row = static_cast<Eigen::Index>(i);
  const double t = features_.row(row).dot(x);
  out.noalias() = (sigmoid(t) - labels_(row)) * features_.row(row).transpose();
  out += lambda_ * x;
}

void LogisticModel::component_gradient_difference(
    std::size_t i, const Vector& x, const Vector& y,
    Eigen::Ref<Vector> out) const {
  const auto row = static_cast<Eigen::Index>(i);
  const double sx = sigmoid(features_.row(row).dot(x));
  const double sy = sigmoid(features_.row(row).dot(y));
  out.noalias() = (sx - sy) * features_.row(row).transpose();
  out += lambda_ * (x - y);
}

Matrix LogisticModel::hessian(const Vector& x) const {
  const Eigen::Index d = features_.cols();
  const Eigen::Index n = features_.rows();
  Matrix h = Matrix::Zero(d, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double s = sigmoid(features_.row(i).dot(x));
    h.noalias() += (s * (1.0 - s)) * features_.row(i).transpose() *
                   features_.row(i);
  }
  h /= static_cast<double>(n);
  h.diagonal().array() += lambda_;
  return 0.5 * (h + h.transpose());
}

double LogisticModel::value(const Vector& x) const {
  CompensatedSum s;
  for (Eigen::Index i = 0; i < features_.rows(); ++i) {
    const double t = features_.row(i).dot(x);
    const double softplus = std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t)));
    s.add(-labels_(i) * t + softplus);
  }
  return s.value() / static_cast<double>(features_.rows()) +
         0.5 * lambda_ * x.squaredNorm();
}

double LogisticModel::feature_moment(int p) const {
  CompensatedSum s;
  for (Eigen::Index i = 0; i < features_.rows(); ++i) {
    s.add(std::pow(features_.row(i).norm(), p));
  }
  return s.value() / static_cast<double>(features_.rows());
}

ModelMetadata LogisticModel::metadata() const {
  ModelMetadata meta;
  double max_sq = 0.0;
  for (Eigen::Index i = 0; i < features_.rows(); ++i) {
    max_sq = std::max(max_sq, features_.row(i).squaredNorm());
  }
  meta.smoothness = max_sq / 4.0 + lambda_;
  return meta;
}

// ---------------------------------------------------------------------------
// Covariance and diffusion factor

SymMatrix sigma_enumerated(const ObjectiveModel& model, const Vector& x,
                           const Vector& y) {
  require(x.allFinite() && y.allFinite(), ErrorCode::InvalidInput,
          "sigma requires finite points");
  const auto d = static_cast<Eigen::Index>(model.dim());
  const auto n = static_cast<Eigen::Index>(model.size());
  Matrix g(n, d);
  Vector gi(d);
  for (Eigen::Index i = 0; i < n; ++i) {
    model.component_gradient_difference(static_cast<std::size_t>(i), x, y, gi);
    g.row(i) = gi.transpose();
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  Vector mean(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    CompensatedSum s;
    for (Eigen::Index i = 0; i < n; ++i) s.add(g(i, j));
    mean(j) = s.value() * inv_n;
  }
  Matrix cov(d, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    for (Eigen::Index k = 0; k <= j; ++k) {
      CompensatedSum s;
      for (Eigen::Index i = 0; i < n; ++i) {
        s.add((g(i, j) - mean(j)) * (g(i, k) - mean(k)));
      }
      cov(j, k) = cov(k, j) = s.value() * inv_n;
    }
  }
  return SymMatrix(std::move(cov));
}

SymMatrix sigma(const ObjectiveModel& model, const Vector& x, const Vector& y) {
  require(x.allFinite() && y.allFinite(), ErrorCode::InvalidInput,
          "sigma requires finite points");
  return model.covariance(x, y);
}

void DiffusionSpec::validate() const {
  require(model != nullptr, ErrorCode::InvalidConfig, "no model bound");
  require(eta > 0.0 && std::isfinite(eta), ErrorCode::InvalidConfig,
          "eta must be positive");
  require(delta >= 0.0 && delta <= 1.0, ErrorCode::InvalidConfig,
          "delta must lie in [0, 1]");
  require(delta == 0.0 || eta <= delta, ErrorCode::InvalidConfig,
          "eta must not exceed delta");
}

SymMatrix q_factor(const DiffusionSpec& spec, const Vector& x,
                   const Vector& y) {
  return psd_sqrt(sigma(*spec.model, x, y), spec.ridge());
}

struct QFactorCache::Impl {
  std::size_t capacity;
  std::unordered_map<std::uint64_t, std::vector<std::pair<Vector, SymMatrix>>>
      table;
  std::size_t entries = 0;
};

namespace {

std::uint64_t fnv1a(const Vector& v, std::uint64_t h) {
  const auto* bytes = reinterpret_cast<const unsigned char*>(v.data());
  const std::size_t len = static_cast<std::size_t>(v.size()) * sizeof(double);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

QFactorCache::QFactorCache(DiffusionSpec spec, std::size_t capacity)
    : impl_(std::make_shared<Impl>()), spec_(spec) {
  impl_->capacity = std::max<std::size_t>(capacity, 1);
}

SymMatrix QFactorCache::get(const Vector& x, const Vector& y) {
  Vector key(x.size() + y.size());
  key << x, y;
  const std::uint64_t h = fnv1a(key, 0xcbf29ce484222325ULL);
  auto& bucket = impl_->table[h];
  for (const auto& [k, q] : bucket) {
    if (k.size() == key.size() &&
        std::memcmp(k.data(), key.data(),
                    static_cast<std::size_t>(key.size()) * sizeof(double)) ==
            0) {
      ++hits_;
      return q;
    }
  }
  ++misses_;
  SymMatrix q = q_factor(spec_, x, y);
  if (impl_->entries >= impl_->capacity) {
    impl_->table.clear();
    impl_->entries = 0;
  }
  impl_->table[h].emplace_back(std::move(key), q);
  ++impl_->entries;
  return q;
}

Matrix quadratic_sigma_closed_form(const QuadraticAlternateModel& model,
                                   const Vector& x, const Vector& y,
                                   Orientation orientation) {
  const Matrix& r = model.rotation();
  const Vector u = orientation == Orientation::Transposed
                       ? Vector(r.transpose() * (x - y))
                       : Vector(r * (x - y));
  return r * u.cwiseAbs2().asDiagonal() * r.transpose();
}

Matrix quadratic_q_closed_form(const QuadraticAlternateModel& model,
                               const Vector& x, const Vector& y, double eta,
                               double delta, Orientation orientation) {
  const Matrix& r = model.rotation();
  const Vector u = orientation == Orientation::Transposed
                       ? Vector(r.transpose() * (x - y))
                       : Vector(r * (x - y));
  const Vector root = (u.cwiseAbs2().array() + delta / eta).sqrt().matrix();
  return r * root.asDiagonal() * r.transpose();
}

// ---------------------------------------------------------------------------
// Generators

Matrix random_orthogonal(std::size_t d, Rng& rng) {
  const auto n = static_cast<Eigen::Index>(d);
  Matrix g(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) g(i, j) = rng.normal();
  }
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(n, n);
  const Matrix& r = qr.matrixQR();
  for (Eigen::Index j = 0; j < n; ++j) {
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  }
  return q;
}

std::unique_ptr<QuadraticAlternateModel> generate_quadratic_model(
    std::size_t d, std::size_t n, const Vector& eigenvalues,
    std::uint64_t seed) {
  require(d >= 1 && n >= 1, ErrorCode::InvalidInput, "need d >= 1 and n >= 1");
  require(static_cast<std::size_t>(eigenvalues.size()) == d,
          ErrorCode::InvalidInput, "need exactly d eigenvalues");
  for (Eigen::Index j = 0; j < eigenvalues.size(); ++j) {
    require(eigenvalues(j) > 0.0, ErrorCode::InvalidInput,
            "eigenvalues must be positive");
  }
  Rng rng(seed, 0, Stream::Model);
  Matrix rotation = random_orthogonal(d, rng);
  Matrix samples(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < samples.rows(); ++i) {
    for (Eigen::Index j = 0; j < samples.cols(); ++j) {
      samples(i, j) = rng.normal();
    }
  }
  return std::make_unique<QuadraticAlternateModel>(
      std::move(rotation), eigenvalues, std::move(samples), seed);
}

std::unique_ptr<LogisticModel> generate_logistic_model(
    std::size_t d, std::size_t n, const Vector& true_param, double lambda,
    std::uint64_t seed) {
  require(d >= 1 && n >= 1, ErrorCode::InvalidInput, "need d >= 1 and n >= 1");
  require(lambda > 0.0, ErrorCode::InvalidInput, "lambda must be positive");
  require(static_cast<std::size_t>(true_param.size()) == d,
          ErrorCode::InvalidInput, "true parameter must have d entries");
  Rng rng(seed, 0, Stream::Model);
  const auto rows = static_cast<Eigen::Index>(n);
  Matrix features(rows, static_cast<Eigen::Index>(d));
  Vector labels(rows);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < features.cols(); ++j) {
      features(i, j) = rng.normal();
    }
    const double p = sigmoid(features.row(i).dot(true_param));
    labels(i) = rng.uniform() < p ? 1.0 : 0.0;
  }
  return std::make_unique<LogisticModel>(std::move(features),
                                         std::move(labels), lambda, true_param,
                                         seed);
}

}  // namespace svrgld
