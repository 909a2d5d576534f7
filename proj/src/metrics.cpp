#include "svrgld/metrics.hpp"

#include "svrgld/error.hpp"
#include "svrgld/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace svrgld {

EmpiricalMeasure::EmpiricalMeasure(Matrix samples) : samples_(std::move(samples)) {
  require(samples_.rows() >= 1 && samples_.cols() >= 1, ErrorCode::InvalidInput,
          "empirical measure needs at least one sample");
  require(samples_.allFinite(), ErrorCode::InvalidInput,
          "empirical measure has non-finite samples");
}

namespace {

std::vector<double> subsample(const std::vector<double>& v, std::size_t k,
                              std::uint64_t seed) {
  Rng rng(seed, 0, Stream::Sampling);
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.index(v.size() - i);
    std::swap(idx[i], idx[j]);
  }
  std::vector<double> out(k);
  for (std::size_t i = 0; i < k; ++i) out[i] = v[idx[i]];
  return out;
}

double w1_sorted_values(std::vector<double> a, std::vector<double> b,
                        std::uint64_t seed) {
  if (a.size() > b.size()) a = subsample(a, b.size(), seed);
  if (b.size() > a.size()) b = subsample(b, a.size(), seed);
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  CompensatedSum s;
  for (std::size_t i = 0; i < a.size(); ++i) s.add(std::abs(a[i] - b[i]));
  return s.value() / static_cast<double>(a.size());
}

std::vector<double> project(const Matrix& m, const Vector& u) {
  const Vector p = m * u;
  return {p.data(), p.data() + p.size()};
}

}  // namespace

double w1_exact_1d(const EmpiricalMeasure& a, const EmpiricalMeasure& b,
                   std::uint64_t seed) {
  require(a.dim() == 1 && b.dim() == 1, ErrorCode::InvalidInput,
          "w1_exact_1d needs one-dimensional samples");
  return w1_sorted_values(project(a.samples(), Vector::Ones(1)),
                          project(b.samples(), Vector::Ones(1)), seed);
}

SlicedW1 sliced_w1(const EmpiricalMeasure& a, const EmpiricalMeasure& b,
                   std::size_t projections, std::uint64_t seed) {
  require(a.dim() == b.dim(), ErrorCode::InvalidInput,
          "sliced_w1 dimension mismatch");
  require(projections >= 1, ErrorCode::InvalidInput, "need >= 1 projection");
  const auto d = static_cast<Eigen::Index>(a.dim());
  std::vector<double> values(projections);
  for (std::size_t p = 0; p < projections; ++p) {
    Rng rng(seed, p, Stream::Projection);
    Vector u(d);
    do {
      for (Eigen::Index j = 0; j < d; ++j) u(j) = rng.normal();
    } while (u.norm() == 0.0);
    u.normalize();
    values[p] = w1_sorted_values(project(a.samples(), u),
                                 project(b.samples(), u), seed + p);
  }
  const double n = static_cast<double>(projections);
  CompensatedSum sum;
  for (const double v : values) sum.add(v);
  const double mean = sum.value() / n;
  if (projections == 1) return {mean, 0.0};
  CompensatedSum sq;
  for (const double v : values) sq.add((v - mean) * (v - mean));
  return {mean, std::sqrt(sq.value() / (n - 1.0) / n)};
}

double moment(const EmpiricalMeasure& a, int p) {
  require(p == 1 || p == 2 || p == 4 || p == 8, ErrorCode::InvalidInput,
          "moment order must be 1, 2, 4 or 8");
  CompensatedSum s;
  const Matrix& x = a.samples();
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double r2 = x.row(i).squaredNorm();
    switch (p) {
      case 1: s.add(std::sqrt(r2)); break;
      case 2: s.add(r2); break;
      case 4: s.add(r2 * r2); break;
      default: s.add(r2 * r2 * r2 * r2); break;
    }
  }
  return s.value() / static_cast<double>(x.rows());
}

double coupled_distance(const Ensemble& a, const Ensemble& b, std::size_t s,
                        int p) {
  require(a.coupled && b.coupled && a.coupling_key == b.coupling_key,
          ErrorCode::InvalidInput,
          "coupled_distance needs ensembles from one coupled run");
  require(a.replicas() == b.replicas(), ErrorCode::InvalidInput,
          "replica count mismatch");
  require(p == 1 || p == 2, ErrorCode::InvalidInput, "p must be 1 or 2");
  const Matrix xa = a.states_at(s);
  const Matrix xb = b.states_at(s);
  require(xa.cols() == xb.cols(), ErrorCode::InvalidInput, "dimension mismatch");
  CompensatedSum sum;
  for (Eigen::Index r = 0; r < xa.rows(); ++r) {
    const double dist = (xa.row(r) - xb.row(r)).norm();
    sum.add(p == 1 ? dist : dist * dist);
  }
  const double mean = sum.value() / static_cast<double>(xa.rows());
  return p == 2 ? std::sqrt(mean) : mean;
}

}  // namespace svrgld
