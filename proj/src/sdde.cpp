#include "svrgld/sdde.hpp"

#include "parallel.hpp"
#include "svrgld/error.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

namespace svrgld {

void SddeConfig::validate(const ObjectiveModel& model) const {
  run.validate(model);
  require(substeps >= 1, ErrorCode::InvalidConfig, "substeps must be >= 1");
}

std::uint64_t independent_seed(std::uint64_t seed) {
  return splitmix64(seed ^ 0x5344444553454544ULL);
}

namespace {

constexpr double kDivergenceRadius = 1e12;

void check_state(const Vector& x, std::size_t replica, std::size_t substep) {
  if (!x.allFinite() || x.norm() > kDivergenceRadius) {
    fail(ErrorCode::Diverged,
         "SDDE state left the ball of radius 1e12 (replica " +
             std::to_string(replica) + ", substep " + std::to_string(substep) +
             "); the step size is likely too large for the drift");
  }
}

class Diffusion {
 public:
  Diffusion(const DiffusionSpec& spec, bool cached) : spec_(spec) {
    if (cached) cache_.emplace(spec);
  }
  Matrix operator()(const Vector& x, const Vector& anchor) {
    return cache_ ? cache_->get(x, anchor).matrix()
                  : q_factor(spec_, x, anchor).matrix();
  }

 private:
  DiffusionSpec spec_;
  std::optional<QFactorCache> cache_;
};

void fill_normals(Rng& rng, Vector& z) {
  for (Eigen::Index j = 0; j < z.size(); ++j) z(j) = rng.normal();
}

// Q'(x, y)[dx, dy]: derivative of Q along dx in the first and dy in the
// second argument.
Matrix q_derivative(const DiffusionSpec& spec, const Vector& x,
                    const Vector& y, const Vector& dx, const Vector& dy) {
  const auto d = x.size();
  Matrix out = Matrix::Zero(d, d);
  const double nx = dx.norm();
  if (nx > 0.0) {
    const MatrixField f = [&](const Vector& p) -> Matrix {
      return q_factor(spec, p, y).matrix();
    };
    const Vector dir = dx / nx;
    out += nx * directional_derivative(f, x, std::span<const Vector>(&dir, 1));
  }
  const double ny = dy.norm();
  if (ny > 0.0) {
    const MatrixField f = [&](const Vector& p) -> Matrix {
      return q_factor(spec, x, p).matrix();
    };
    const Vector dir = dy / ny;
    out += ny * directional_derivative(f, y, std::span<const Vector>(&dir, 1));
  }
  return out;
}

}  // namespace

Ensemble run_sdde_em(const ObjectiveModel& model, const SddeConfig& config,
                     const Vector& x0, const SddeObserver& observer) {
  config.validate(model);
  require(static_cast<std::size_t>(x0.size()) == model.dim(),
          ErrorCode::InvalidInput, "initial point has the wrong dimension");
  const DiffusionSpec spec = config.run.spec(model);
  const auto d = x0.size();
  const double h = config.h();
  const double noise_scale = std::sqrt(spec.eta * h);
  const std::size_t per_epoch = config.run.m * config.substeps;

  Ensemble ens;
  ens.component = Component::Sdde;
  ens.config = config.run;
  ens.substeps = config.substeps;
  ens.paths.resize(config.run.replicas);

  const unsigned threads = observer ? 1u : resolve_threads(config.run.threads);
  detail::parallel_for(config.run.replicas, threads, [&](std::size_t r) {
    Rng gauss(config.run.seed, r, Stream::Gaussian);
    Diffusion q(spec, config.use_q_cache);
    EpochPath& path = ens.paths[r];
    path.states.resize(static_cast<Eigen::Index>(config.run.epochs) + 1, d);
    path.states.row(0) = x0.transpose();

    Vector x = x0;
    Vector z(d);
    std::size_t substep = 0;
    for (std::size_t s = 0; s < config.run.epochs; ++s) {
      const Vector anchor = x;
      for (std::size_t k = 0; k < per_epoch; ++k, ++substep) {
        if (observer) observer(r, s, substep, x, anchor);
        fill_normals(gauss, z);
        const Vector drift = model.full_gradient(x);
        x += -h * drift + noise_scale * (q(x, anchor) * z);
        check_state(x, r, substep);
      }
      path.states.row(static_cast<Eigen::Index>(s) + 1) = x.transpose();
    }
  });
  return ens;
}

std::pair<Ensemble, Ensemble> run_coupled(const ObjectiveModel& model,
                                          const SddeConfig& config,
                                          const Vector& x0) {
  require(config.substeps == 1, ErrorCode::InvalidConfig,
          "coupled runs require substeps = 1");
  Ensemble a = run_svrgld(model, config.run, x0);
  Ensemble b = run_sdde_em(model, config, x0);
  a.coupled = b.coupled = true;
  a.coupling_key = b.coupling_key = config.run.seed;
  return {std::move(a), std::move(b)};
}

std::vector<JacobianPath> run_jacobian_flow(const ObjectiveModel& model,
                                            const SddeConfig& config,
                                            const Vector& x0,
                                            const Vector& v) {
  config.validate(model);
  require(static_cast<std::size_t>(x0.size()) == model.dim() &&
              v.size() == x0.size(),
          ErrorCode::InvalidInput, "dimension mismatch");
  require(std::abs(v.norm() - 1.0) <= 1e-12, ErrorCode::InvalidInput,
          "direction must be a unit vector");
  const DiffusionSpec spec = config.run.spec(model);
  const auto d = x0.size();
  const double h = config.h();
  const double noise_scale = std::sqrt(spec.eta * h);
  const std::size_t steps = config.run.epochs * config.run.m;
  const std::size_t kappa = config.substeps;

  std::vector<JacobianPath> out(config.run.replicas);
  detail::parallel_for(
      config.run.replicas, resolve_threads(config.run.threads),
      [&](std::size_t r) {
        Rng gauss(config.run.seed, r, Stream::Gaussian);
        JacobianPath& path = out[r];
        path.direction = v;
        path.dt = spec.eta;
        path.states.resize(static_cast<Eigen::Index>(steps) + 1, d);
        path.jacobian.resize(static_cast<Eigen::Index>(steps) + 1, d);
        path.states.row(0) = x0.transpose();
        path.jacobian.row(0) = v.transpose();

        Vector x = x0, j = v;
        Vector anchor = x0, j_anchor = v;
        Vector z(d);
        for (std::size_t k = 0; k < steps; ++k) {
          if (k % config.run.m == 0) {
            anchor = x;
            j_anchor = j;
          }
          for (std::size_t sub = 0; sub < kappa; ++sub) {
            fill_normals(gauss, z);
            const Matrix q = q_factor(spec, x, anchor).matrix();
            const Matrix dq = q_derivative(spec, x, anchor, j, j_anchor);
            const Vector dx = -h * model.full_gradient(x) + noise_scale * (q * z);
            const Vector dj = -h * (model.hessian(x) * j) + noise_scale * (dq * z);
            x += dx;
            j += dj;
            check_state(x, r, k * kappa + sub);
            check_state(j, r, k * kappa + sub);
          }
          path.states.row(static_cast<Eigen::Index>(k) + 1) = x.transpose();
          path.jacobian.row(static_cast<Eigen::Index>(k) + 1) = j.transpose();
        }
      });
  return out;
}

TestFunction clipped_linear(const Vector& u, double clip) {
  require(u.norm() > 0.0 && clip > 0.0, ErrorCode::InvalidInput,
          "clipped_linear needs a nonzero direction and positive clip");
  const Vector unit = u / u.norm();
  return [unit, clip](const Vector& x) {
    return std::clamp(unit.dot(x), -clip, clip);
  };
}

TestFunction distance_to(const Vector& c) {
  return [c](const Vector& x) { return (x - c).norm(); };
}

std::vector<GradientEstimate> semigroup_gradient(
    const ObjectiveModel& model, const SddeConfig& config, const Vector& x0,
    const Vector& v, const TestFunction& h, std::span<const double> times,
    std::size_t replicas) {
  config.validate(model);
  require(replicas >= 2, ErrorCode::InvalidConfig, "need at least 2 replicas");
  require(std::abs(v.norm() - 1.0) <= 1e-12 && v.size() == x0.size(),
          ErrorCode::InvalidInput, "direction must be a unit vector");
  const DiffusionSpec spec = config.run.spec(model);
  const double step = config.h();
  const double noise_scale = std::sqrt(spec.eta * step);
  const std::size_t per_epoch = config.run.m * config.substeps;

  std::vector<std::size_t> marks;
  for (const double t : times) {
    require(t >= 0.0, ErrorCode::InvalidInput, "times must be non-negative");
    const double k = std::round(t / step);
    require(std::abs(k * step - t) <= 1e-9 * std::max(1.0, t),
            ErrorCode::InvalidInput, "times must be multiples of the EM step");
    marks.push_back(static_cast<std::size_t>(k));
  }
  const std::size_t horizon =
      marks.empty() ? 0 : *std::max_element(marks.begin(), marks.end());

  const double eps = 1e-3 * (1.0 + x0.norm());
  // diffs(r, i): per-replica difference quotient at time index i.
  Matrix diffs(static_cast<Eigen::Index>(replicas),
               static_cast<Eigen::Index>(marks.size()));
  detail::parallel_for(
      replicas, resolve_threads(config.run.threads), [&](std::size_t r) {
        Rng gauss(config.run.seed, r, Stream::Gaussian);
        Vector xp = x0 + eps * v, xm = x0 - eps * v;
        Vector ap = xp, am = xm;
        Vector z(x0.size());
        auto record = [&](std::size_t k) {
          for (std::size_t i = 0; i < marks.size(); ++i) {
            if (marks[i] == k) {
              diffs(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(i)) =
                  (h(xp) - h(xm)) / (2.0 * eps);
            }
          }
        };
        record(0);
        for (std::size_t k = 0; k < horizon; ++k) {
          if (k % per_epoch == 0) {
            ap = xp;
            am = xm;
          }
          fill_normals(gauss, z);
          xp += -step * model.full_gradient(xp) +
                noise_scale * (q_factor(spec, xp, ap).matrix() * z);
          xm += -step * model.full_gradient(xm) +
                noise_scale * (q_factor(spec, xm, am).matrix() * z);
          check_state(xp, r, k);
          check_state(xm, r, k);
          record(k + 1);
        }
      });

  std::vector<GradientEstimate> out;
  const double rn = static_cast<double>(replicas);
  for (std::size_t i = 0; i < marks.size(); ++i) {
    const auto col = diffs.col(static_cast<Eigen::Index>(i));
    const double mean = col.mean();
    const double var = (col.array() - mean).square().sum() / (rn - 1.0);
    out.push_back({times[i], mean, std::sqrt(var / rn)});
  }
  return out;
}

GradientEstimate semigroup_gradient(const ObjectiveModel& model,
                                    const SddeConfig& config, const Vector& x0,
                                    const Vector& v, const TestFunction& h,
                                    double t, std::size_t replicas) {
  const double times[] = {t};
  return semigroup_gradient(model, config, x0, v, h, times, replicas)[0];
}

}  // namespace svrgld
