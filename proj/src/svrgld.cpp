#include "svrgld/svrgld.hpp"

#include "parallel.hpp"
#include "svrgld/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <string>
#include <thread>

namespace svrgld {

void RunConfig::validate(const ObjectiveModel& model) const {
  spec(model).validate();
  require(m >= 1, ErrorCode::InvalidConfig, "epoch length m must be >= 1");
  require(batch >= 1, ErrorCode::InvalidConfig, "batch must be >= 1");
  require(replicas >= 1, ErrorCode::InvalidConfig, "replicas must be >= 1");
  require(!without_replacement || batch <= model.size(),
          ErrorCode::InvalidConfig,
          "batch exceeds component count without replacement");
}

unsigned resolve_threads(unsigned requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("SVRGLD_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

const char* to_string(Component c) noexcept {
  return c == Component::Svrgld ? "svrgld" : "sdde";
}

Matrix Ensemble::states_at(std::size_t s) const {
  require(!paths.empty() && s <= epochs(), ErrorCode::InvalidInput,
          "epoch index out of range");
  const auto d = paths[0].states.cols();
  Matrix out(static_cast<Eigen::Index>(paths.size()), d);
  for (std::size_t r = 0; r < paths.size(); ++r) {
    out.row(static_cast<Eigen::Index>(r)) =
        paths[r].states.row(static_cast<Eigen::Index>(s));
  }
  return out;
}

namespace {

void draw_batch(std::size_t n, std::size_t batch, bool without_replacement,
                Rng& rng, std::vector<std::size_t>& out) {
  out.clear();
  if (!without_replacement) {
    for (std::size_t b = 0; b < batch; ++b) out.push_back(rng.index(n));
    return;
  }
  // Floyd's sampling of a batch-sized subset.
  for (std::size_t j = n - batch; j < n; ++j) {
    const std::size_t t = rng.index(j + 1);
    if (std::find(out.begin(), out.end(), t) == out.end()) {
      out.push_back(t);
    } else {
      out.push_back(j);
    }
  }
}

}  // namespace

Vector svrgld_step(const ObjectiveModel& model, const DiffusionSpec& spec,
                   const Vector& state, const Vector& anchor,
                   const Vector& anchor_grad, StepStreams& rng,
                   std::size_t batch, bool without_replacement) {
  const auto d = state.size();
  thread_local std::vector<std::size_t> indices;
  draw_batch(model.size(), batch, without_replacement, rng.index, indices);

  Vector g = Vector::Zero(d);
  Vector diff(d);
  for (const std::size_t i : indices) {
    model.component_gradient_difference(i, state, anchor, diff);
    g += diff;
  }
  g /= static_cast<double>(batch);
  g += anchor_grad;

  Vector next = state - spec.eta * g;
  const double scale = std::sqrt(spec.eta * spec.delta);
  for (Eigen::Index j = 0; j < d; ++j) {
    const double w = rng.gaussian.normal();
    next(j) += scale * w;
  }
  return next;
}

Ensemble run_svrgld(const ObjectiveModel& model, const RunConfig& config,
                    const Vector& x0, const StepObserver& observer) {
  config.validate(model);
  require(static_cast<std::size_t>(x0.size()) == model.dim(),
          ErrorCode::InvalidInput, "initial point has the wrong dimension");
  const DiffusionSpec spec = config.spec(model);
  const auto d = x0.size();
  const auto epochs = static_cast<Eigen::Index>(config.epochs);

  Ensemble ens;
  ens.component = Component::Svrgld;
  ens.config = config;
  ens.paths.resize(config.replicas);

  const unsigned threads = observer ? 1u : resolve_threads(config.threads);
  detail::parallel_for(config.replicas, threads, [&](std::size_t r) {
    StepStreams rng(config.seed, r);
    EpochPath& path = ens.paths[r];
    path.states.resize(epochs + 1, d);
    path.states.row(0) = x0.transpose();
    if (config.record_inner) path.inner.resize(config.epochs);

    Vector x = x0;
    for (std::size_t s = 0; s < config.epochs; ++s) {
      const Vector anchor = x;
      const Vector anchor_grad = model.full_gradient(anchor);
      if (config.record_inner) {
        path.inner[s].resize(static_cast<Eigen::Index>(config.m), d);
      }
      for (std::size_t t = 0; t < config.m; ++t) {
        if (observer) observer(r, s, t, x, anchor, anchor_grad);
        x = svrgld_step(model, spec, x, anchor, anchor_grad, rng, config.batch,
                        config.without_replacement);
        if (config.record_inner) {
          path.inner[s].row(static_cast<Eigen::Index>(t)) = x.transpose();
        }
      }
      path.states.row(static_cast<Eigen::Index>(s) + 1) = x.transpose();
    }
  });
  return ens;
}

}  // namespace svrgld
