#pragma once

#include "svrgld/linalg.hpp"
#include "svrgld/svrgld.hpp"

#include <cstdint>

namespace svrgld {

/// Uniformly weighted sample cloud, one sample per row.
class EmpiricalMeasure {
 public:
  explicit EmpiricalMeasure(Matrix samples);
  static EmpiricalMeasure from_ensemble(const Ensemble& ens, std::size_t s) {
    return EmpiricalMeasure(ens.states_at(s));
  }

  std::size_t size() const { return static_cast<std::size_t>(samples_.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(samples_.cols()); }
  const Matrix& samples() const { return samples_; }

 private:
  Matrix samples_;
};

/// Exact W1 between two 1-D clouds. When the sizes differ the larger cloud
/// is subsampled without replacement (seeded) to the smaller size.
double w1_exact_1d(const EmpiricalMeasure& a, const EmpiricalMeasure& b,
                   std::uint64_t seed = 0);

struct SlicedW1 {
  double mean = 0.0;
  double std_error = 0.0;
};

/// Mean of 1-D W1 over `projections` random unit directions; direction p is
/// drawn from its own stream so results do not depend on evaluation order.
SlicedW1 sliced_w1(const EmpiricalMeasure& a, const EmpiricalMeasure& b,
                   std::size_t projections = 128, std::uint64_t seed = 0);

/// (1/N) sum |x_i|^p for p in {1, 2, 4, 8}.
double moment(const EmpiricalMeasure& a, int p);

/// (1/R) sum_r |a_r(s) - b_r(s)|^p, p-th root taken for p = 2. Both
/// ensembles must come from the same coupled run.
double coupled_distance(const Ensemble& a, const Ensemble& b, std::size_t s,
                        int p);

}  // namespace svrgld
