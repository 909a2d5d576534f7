#pragma once

#include "svrgld/models.hpp"
#include "svrgld/rng.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace svrgld {

struct RunConfig {
  double eta = 0.01;
  double delta = 0.01;
  std::size_t m = 1;        // epoch length
  std::size_t batch = 1;
  std::size_t epochs = 0;
  std::size_t replicas = 1;
  std::uint64_t seed = 0;
  bool record_inner = false;
  bool without_replacement = false;
  unsigned threads = 0;     // 0: SVRGLD_THREADS or hardware concurrency

  /// Throws InvalidConfig on non-positive counts, batch > n without
  /// replacement, or an (eta, delta) pair rejected by DiffusionSpec.
  void validate(const ObjectiveModel& model) const;
  DiffusionSpec spec(const ObjectiveModel& model) const {
    return {&model, eta, delta};
  }
  /// eta <= delta <= 1 with delta > 0.
  bool standing_regime() const { return delta > 0.0 && eta <= delta && delta <= 1.0; }
};

/// Worker count for a requested value; 0 defers to the SVRGLD_THREADS
/// environment variable, then to the hardware.
unsigned resolve_threads(unsigned requested);

struct EpochPath {
  Matrix states;              // (epochs + 1) x d, row s is the state after s epochs
  std::vector<Matrix> inner;  // per epoch, m x d inner iterates (record_inner)
};

enum class Component { Svrgld, Sdde };
const char* to_string(Component c) noexcept;

struct Ensemble {
  Component component = Component::Svrgld;
  RunConfig config;
  std::size_t substeps = 1;
  std::vector<EpochPath> paths;
  bool coupled = false;
  std::uint64_t coupling_key = 0;

  std::size_t replicas() const { return paths.size(); }
  std::size_t epochs() const {
    return paths.empty() ? 0 : static_cast<std::size_t>(paths[0].states.rows()) - 1;
  }
  /// Replica states at epoch s, one row per replica.
  Matrix states_at(std::size_t s) const;
};

/// Per-replica random streams: batch indices and Gaussian increments are
/// drawn from separate engines.
struct StepStreams {
  StepStreams(std::uint64_t seed, std::uint64_t replica)
      : index(seed, replica, Stream::Index),
        gaussian(seed, replica, Stream::Gaussian) {}
  Rng index;
  Rng gaussian;
};

/// One inner step
///   x - eta [ mean_B (grad psi_i(x) - grad psi_i(anchor)) + anchor_grad ]
///     + sqrt(eta delta) W.
/// anchor_grad must be the full gradient at anchor.
Vector svrgld_step(const ObjectiveModel& model, const DiffusionSpec& spec,
                   const Vector& state, const Vector& anchor,
                   const Vector& anchor_grad, StepStreams& rng,
                   std::size_t batch = 1, bool without_replacement = false);

/// Called before every inner step with the replica, epoch, inner index
/// (0-based) and the state/anchor the step will use. Forces a single thread.
using StepObserver =
    std::function<void(std::size_t replica, std::size_t epoch,
                       std::size_t inner, const Vector& state,
                       const Vector& anchor, const Vector& anchor_grad)>;

Ensemble run_svrgld(const ObjectiveModel& model, const RunConfig& config,
                    const Vector& x0, const StepObserver& observer = {});

}  // namespace svrgld
