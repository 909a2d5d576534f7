#pragma once

#include "svrgld/models.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace svrgld {

// Every estimate below is a maximum or minimum over a fixed, seeded sample
// set: a lower bound on the true supremum, never the supremum itself.

struct SmoothnessEstimate {
  double l_hat = 0.0;       // max (E_I |dgrad psi_I|^4)^{1/4} / |x - y|
  double l_full_hat = 0.0;  // max |grad P(x) - grad P(y)| / |x - y|
};

SmoothnessEstimate estimate_smoothness(const ObjectiveModel& model,
                                       std::size_t trials, double radius,
                                       std::uint64_t seed);

struct DissipativityEstimate {
  bool dissipative = false;  // false: no supporting line with positive slope
  double gamma_hat = 0.0;
  double k_hat = 0.0;
};

/// Supporting line f >= gamma r - K under the scatter (r, f) =
/// (|x|^2, <grad P(x), x>) for x uniform in the ball, origin included.
/// If every sampled f/r is positive the line through the origin with the
/// smallest ratio is returned (K = 0); otherwise the lower-hull edge with
/// positive slope whose root K/gamma is smallest.
DissipativityEstimate estimate_dissipativity(const ObjectiveModel& model,
                                             std::size_t trials, double radius,
                                             std::uint64_t seed);

/// Same rule applied to an explicit scatter of (r, f) points.
DissipativityEstimate fit_dissipativity(std::vector<std::pair<double, double>> points);

struct Ceiling {
  std::string name;
  double value = 0.0;    // sampled maximum
  double ceiling = 0.0;  // analytic bound including slack
  bool pass = false;
};

struct Assumption4Report {
  // A[0], A[1]: max |d^2 grad P|, |d^3 grad P|; A[2..4]: max squared HS norms
  // of the first, second and third x-derivatives of Q (A[2] over both
  // arguments).
  std::array<double, 5> a_hat{};
  // Un-squared maxima: d grad P (2), d grad P (3), d1 Q, d2 Q, d11 Q, d111 Q.
  double d2_grad = 0.0, d3_grad = 0.0;
  double dq1 = 0.0, dq2 = 0.0, dqq = 0.0, dqqq = 0.0;
  // A3 divided by eta/delta, the scale the logistic ceiling predicts.
  double a3_normalized = 0.0;
  std::vector<Ceiling> ceilings;  // empty for models without known ceilings
  bool pass() const;
};

Assumption4Report check_assumption4(const DiffusionSpec& spec,
                                    std::size_t trials, double radius,
                                    std::uint64_t seed);

struct SqrtLemmaReport {
  std::size_t points = 0;
  std::size_t skipped = 0;  // lambda_min below the floor
  // max LHS / RHS per order (0 when both vanish)
  std::array<double, 3> max_ratio{};
  std::array<std::size_t, 3> violations{};
  // max |finite-difference first derivative - spectral formula|
  double first_order_formula_error = 0.0;
  bool pass() const {
    return violations[0] + violations[1] + violations[2] == 0;
  }
};

/// Exact first derivative of the principal square root at a positive
/// definite s along a symmetric e: V [ (V^T e V)_ij / (sqrt(l_i) + sqrt(l_j)) ] V^T.
Matrix sqrt_derivative(const SymMatrix& s, const Matrix& e);

/// Compares finite-difference derivatives of x -> sigma_hat(x)^{1/2} of
/// orders 1..3 against the spectral-calculus bounds in terms of the
/// derivatives of sigma_hat and its smallest eigenvalue.
SqrtLemmaReport check_sqrt_derivative_lemma(const MatrixField& sigma_hat,
                                            std::span<const Vector> points,
                                            std::size_t dirs_per_point,
                                            double floor, std::uint64_t seed);

struct ConcentrationRow {
  std::string inequality;  // "mean_perturbation", "fourth_moment", "outer_product"
  std::size_t n = 0;
  double rate = 0.0;
  double bound = 0.0;
  double std_error = 0.0;  // binomial, evaluated at the bound
  bool pass = false;
};

struct ConcentrationReport {
  std::vector<ConcentrationRow> rows;
  // rate(4n) <= rate(n)/4 + 3 sigma for grid pairs one factor of 4 apart,
  // where the bound at the smaller n is below 1
  bool scaling_pass = true;
  // Radius r with P(|mean perturbation| > r) <= 1% by Chebyshev, against the
  // smallest eigenvalue of D; r below it keeps the sampled Hessian positive
  // definite with probability >= 99%. Set by run_verification.
  double perturbation_radius = 0.0;
  double min_eigenvalue = 0.0;
  bool large_n = true;
  bool pass() const;
};

using QuadraticFamily =
    std::function<std::unique_ptr<QuadraticAlternateModel>(std::size_t n,
                                                           std::uint64_t seed)>;

/// Regenerates the model `repetitions` times per n and records how often
/// each law-of-large-numbers deviation exceeds epsilon, against the
/// Chebyshev bound.
ConcentrationReport check_concentration(const QuadraticFamily& family,
                                        std::span<const std::size_t> n_grid,
                                        double epsilon,
                                        std::size_t repetitions,
                                        std::uint64_t seed);

struct ConstantSet {
  double gamma = 0.0;
  double l = 0.0;
  double a3 = 0.0;
};

/// Largest step satisfying every step-size condition of the approximation
/// bound for the given constants and delta.
double theorem_eta_max(const ConstantSet& c, double delta);
bool theorem_regime(const ConstantSet& c, double eta, double delta);

struct ClosedFormResidual {
  std::size_t pairs = 0;
  std::size_t within = 0;
  double max_residual = 0.0;
  double tolerance = 0.0;
};

/// Sigma by enumeration against R diag(R^T(x - y))^2 R^T for random pairs
/// with |x - y| <= max_gap.
ClosedFormResidual quadratic_sigma_residual(const QuadraticAlternateModel& model,
                                            std::size_t pairs, double max_gap,
                                            std::uint64_t seed);

struct VerifyOptions {
  double eta = 0.01;
  double delta = 0.01;
  std::size_t smoothness_trials = 10000;
  std::size_t dissipativity_trials = 10000;
  std::size_t assumption4_trials = 200;
  double radius = 10.0;
  double derivative_radius = 2.0;
  std::size_t concentration_repetitions = 200;
  double concentration_bound = 0.1;
  std::uint64_t seed = 0;
};

struct AssumptionReport {
  SmoothnessEstimate smoothness;
  DissipativityEstimate dissipativity;
  Assumption4Report assumption4;
  std::optional<ClosedFormResidual> sigma_closed_form;
  std::optional<SqrtLemmaReport> sqrt_lemma;
  std::optional<ConcentrationReport> concentration;
  double eta = 0.0;
  double delta = 0.0;
  double eta_max = 0.0;
  bool theorem_regime = false;

  bool pass() const;
};

AssumptionReport run_verification(const ObjectiveModel& model,
                                  const VerifyOptions& options);

/// Stable-key JSON rendering of the report.
std::string to_json(const AssumptionReport& report);

}  // namespace svrgld
