#pragma once

#include "svrgld/svrgld.hpp"

#include <functional>
#include <span>
#include <utility>
#include <vector>

namespace svrgld {

struct SddeConfig {
  RunConfig run;
  std::size_t substeps = 1;  // EM substeps per algorithm step; h = eta / substeps
  bool use_q_cache = false;

  void validate(const ObjectiveModel& model) const;
  double h() const { return run.eta / static_cast<double>(substeps); }
};

/// Seed for an SDDE ensemble that must be independent of the SVRG-LD
/// ensemble run with `seed`.
std::uint64_t independent_seed(std::uint64_t seed);

/// Called before every EM substep with the anchor the substep will use.
using SddeObserver =
    std::function<void(std::size_t replica, std::size_t epoch,
                       std::size_t substep, const Vector& state,
                       const Vector& anchor)>;

/// Euler-Maruyama for dX = -grad P(X) dt + sqrt(eta) Q(X, X_anchor) dB with
/// the anchor frozen over each epoch of length m * eta. Throws Diverged when
/// a state leaves the ball of radius 1e12 or turns non-finite.
Ensemble run_sdde_em(const ObjectiveModel& model, const SddeConfig& config,
                     const Vector& x0, const SddeObserver& observer = {});

/// SVRG-LD and SDDE (substeps = 1) ensembles driven by the same Gaussian
/// increments per replica.
std::pair<Ensemble, Ensemble> run_coupled(const ObjectiveModel& model,
                                          const SddeConfig& config,
                                          const Vector& x0);

struct JacobianPath {
  Vector direction;
  double dt = 0.0;   // spacing of the recorded rows (one algorithm step)
  Matrix states;     // (steps + 1) x d
  Matrix jacobian;   // (steps + 1) x d, row k approximates grad_v X at k*dt
};

/// Joint EM integration of X and its derivative along v with respect to the
/// initial point. Derivatives of Q come from finite differences.
std::vector<JacobianPath> run_jacobian_flow(const ObjectiveModel& model,
                                            const SddeConfig& config,
                                            const Vector& x0, const Vector& v);

using TestFunction = std::function<double(const Vector&)>;

/// clamp(<u, x>, -clip, clip) with u normalised; 1-Lipschitz.
TestFunction clipped_linear(const Vector& u, double clip);
/// |x - c|.
TestFunction distance_to(const Vector& c);

struct GradientEstimate {
  double time = 0.0;
  double estimate = 0.0;
  double std_error = 0.0;
};

/// Common-random-number central difference of t -> E h(X_t^x) along v, at
/// each requested time (multiples of the EM step). Uses config.run.seed and
/// `replicas` paths from each of x +/- eps v, eps = 1e-3 (1 + |x|).
std::vector<GradientEstimate> semigroup_gradient(
    const ObjectiveModel& model, const SddeConfig& config, const Vector& x0,
    const Vector& v, const TestFunction& h, std::span<const double> times,
    std::size_t replicas);

GradientEstimate semigroup_gradient(const ObjectiveModel& model,
                                    const SddeConfig& config, const Vector& x0,
                                    const Vector& v, const TestFunction& h,
                                    double t, std::size_t replicas);

}  // namespace svrgld
