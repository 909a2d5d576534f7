#include "svrgld/verify.hpp"

#include "svrgld/error.hpp"
#include "svrgld/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace svrgld {
namespace {

Vector unit_vector(Eigen::Index d, Rng& rng) {
  Vector v(d);
  do {
    for (Eigen::Index j = 0; j < d; ++j) v(j) = rng.normal();
  } while (v.norm() == 0.0);
  return v / v.norm();
}

Vector point_in_ball(Eigen::Index d, double radius, Rng& rng) {
  const Vector dir = unit_vector(d, rng);
  return radius * std::pow(rng.uniform(), 1.0 / static_cast<double>(d)) * dir;
}

double cross(const std::pair<double, double>& o, const std::pair<double, double>& a,
             const std::pair<double, double>& b) {
  return (a.first - o.first) * (b.second - o.second) -
         (a.second - o.second) * (b.first - o.first);
}

Matrix fd(const MatrixField& f, const Vector& x,
          std::initializer_list<Vector> dirs) {
  const std::vector<Vector> v(dirs);
  return directional_derivative(f, x, v);
}

// Chi-square moments E|a|^p of a standard normal vector in R^d, p even.
double gaussian_norm_moment(int d, int p) {
  double m = 1.0;
  for (int k = 0; k < p / 2; ++k) m *= d + 2 * k;
  return m;
}

}  // namespace

SmoothnessEstimate estimate_smoothness(const ObjectiveModel& model,
                                       std::size_t trials, double radius,
                                       std::uint64_t seed) {
  require(trials >= 1 && radius > 0.0, ErrorCode::InvalidInput,
          "need trials >= 1 and a positive radius");
  const auto d = static_cast<Eigen::Index>(model.dim());
  Rng rng(seed, 0, Stream::Sampling);
  SmoothnessEstimate est;
  for (std::size_t t = 0; t < trials; ++t) {
    const Vector x = point_in_ball(d, radius, rng);
    const Vector y = point_in_ball(d, radius, rng);
    const double gap = (x - y).norm();
    if (gap == 0.0) continue;
    const double m4 = model.mean_fourth_power_difference(x, y);
    est.l_hat = std::max(est.l_hat, std::pow(m4, 0.25) / gap);
    est.l_full_hat = std::max(
        est.l_full_hat,
        (model.full_gradient(x) - model.full_gradient(y)).norm() / gap);
  }
  return est;
}

DissipativityEstimate fit_dissipativity(
    std::vector<std::pair<double, double>> points) {
  DissipativityEstimate est;
  double min_ratio = std::numeric_limits<double>::infinity();
  bool all_positive = true;
  for (const auto& [r, f] : points) {
    if (r <= 0.0) continue;
    min_ratio = std::min(min_ratio, f / r);
    if (f <= 0.0) all_positive = false;
  }
  if (all_positive && std::isfinite(min_ratio) && min_ratio > 0.0) {
    est.dissipative = true;
    est.gamma_hat = min_ratio;
    est.k_hat = 0.0;
    return est;
  }

  std::sort(points.begin(), points.end());
  std::vector<std::pair<double, double>> hull;
  for (const auto& p : points) {
    while (hull.size() >= 2 &&
           cross(hull[hull.size() - 2], hull.back(), p) <= 0.0) {
      hull.pop_back();
    }
    if (!hull.empty() && hull.back().first == p.first) continue;
    hull.push_back(p);
  }

  double best_root = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < hull.size(); ++i) {
    const auto& a = hull[i];
    const auto& b = hull[i + 1];
    const double slope = (b.second - a.second) / (b.first - a.first);
    if (!(slope > 0.0)) continue;
    const double k = std::max(0.0, slope * a.first - a.second);
    const double root = k / slope;
    const bool better = root < best_root * (1.0 - 1e-12) ||
                        (root <= best_root * (1.0 + 1e-12) && slope > est.gamma_hat);
    if (!est.dissipative || better) {
      est.dissipative = true;
      est.gamma_hat = slope;
      est.k_hat = k;
      best_root = root;
    }
  }
  return est;
}

DissipativityEstimate estimate_dissipativity(const ObjectiveModel& model,
                                             std::size_t trials, double radius,
                                             std::uint64_t seed) {
  require(trials >= 1 && radius > 0.0, ErrorCode::InvalidInput,
          "need trials >= 1 and a positive radius");
  const auto d = static_cast<Eigen::Index>(model.dim());
  Rng rng(seed, 1, Stream::Sampling);
  std::vector<std::pair<double, double>> points;
  points.reserve(trials + 1);
  points.emplace_back(0.0, 0.0);
  for (std::size_t t = 0; t < trials; ++t) {
    const Vector x = point_in_ball(d, radius, rng);
    points.emplace_back(x.squaredNorm(), model.full_gradient(x).dot(x));
  }
  return fit_dissipativity(std::move(points));
}

bool Assumption4Report::pass() const {
  return std::all_of(ceilings.begin(), ceilings.end(),
                     [](const Ceiling& c) { return c.pass; });
}

Assumption4Report check_assumption4(const DiffusionSpec& spec,
                                    std::size_t trials, double radius,
                                    std::uint64_t seed) {
  spec.validate();
  require(spec.delta > 0.0, ErrorCode::InvalidConfig,
          "derivative checks of Q need delta > 0");
  require(trials >= 1 && radius > 0.0, ErrorCode::InvalidInput,
          "need trials >= 1 and a positive radius");
  const ObjectiveModel& model = *spec.model;
  const auto d = static_cast<Eigen::Index>(model.dim());
  Rng rng(seed, 2, Stream::Sampling);

  Assumption4Report rep;
  const MatrixField grad = [&](const Vector& p) -> Matrix {
    return model.full_gradient(p);
  };
  for (std::size_t t = 0; t < trials; ++t) {
    const Vector x = point_in_ball(d, radius, rng);
    const Vector y = point_in_ball(d, radius, rng);
    const Vector v1 = unit_vector(d, rng);
    const Vector v2 = unit_vector(d, rng);
    const Vector v3 = unit_vector(d, rng);
    const MatrixField q1 = [&](const Vector& p) -> Matrix {
      return q_factor(spec, p, y).matrix();
    };
    const MatrixField q2 = [&](const Vector& p) -> Matrix {
      return q_factor(spec, x, p).matrix();
    };
    rep.d2_grad = std::max(rep.d2_grad, fd(grad, x, {v1, v2}).norm());
    rep.d3_grad = std::max(rep.d3_grad, fd(grad, x, {v1, v2, v3}).norm());
    rep.dq1 = std::max(rep.dq1, fd(q1, x, {v1}).norm());
    rep.dq2 = std::max(rep.dq2, fd(q2, y, {v1}).norm());
    rep.dqq = std::max(rep.dqq, fd(q1, x, {v1, v2}).norm());
    rep.dqqq = std::max(rep.dqqq, fd(q1, x, {v1, v2, v3}).norm());
  }
  rep.a_hat = {rep.d2_grad, rep.d3_grad,
               std::max(rep.dq1 * rep.dq1, rep.dq2 * rep.dq2),
               rep.dqq * rep.dqq, rep.dqqq * rep.dqqq};
  const double ratio = spec.eta / spec.delta;
  rep.a3_normalized = rep.a_hat[2] / ratio;

  const double dd = static_cast<double>(d);
  auto add = [&](const char* name, double value, double ceiling) {
    rep.ceilings.push_back({name, value, ceiling, value <= ceiling});
  };
  if (dynamic_cast<const QuadraticAlternateModel*>(&model)) {
    add("d2_grad", rep.d2_grad, 1e-4);
    add("d3_grad", rep.d3_grad, 1e-4);
    add("d1_q", rep.dq1, 1.05 * dd * dd);
    add("d2_q", rep.dq2, 1.05 * dd * dd);
    add("d11_q", rep.dqq, 1.1 * std::sqrt(ratio) * dd * dd);
    add("d111_q", rep.dqqq, 1.1 * 3.0 * ratio * dd * dd * dd);
  } else if (const auto* lm = dynamic_cast<const LogisticModel*>(&model)) {
    const double e3 = lm->feature_moment(3), e4 = lm->feature_moment(4);
    const double e5 = lm->feature_moment(5), e6 = lm->feature_moment(6);
    const double e7 = lm->feature_moment(7), e9 = lm->feature_moment(9);
    const double sr = std::sqrt(ratio), sd = std::sqrt(dd);
    add("d2_grad", rep.d2_grad, 1.1 * 3.0 * e3);
    add("d3_grad", rep.d3_grad, 1.1 * 13.0 * e4);
    add("d1_q", rep.dq1, 1.1 * 2.0 * e3 * sr);
    add("d2_q", rep.dq2, 1.1 * 2.0 * e3 * sr);
    add("d11_q", rep.dqq, 1.1 * 4.0 * sr * (2.0 * e4 + e6 * sd * ratio));
    add("d111_q", rep.dqqq,
        1.1 * 4.0 * sr *
            (12.0 * sd * e7 * ratio + 6.0 * dd * e9 * ratio * ratio + 11.0 * e5));
  }
  return rep;
}

Matrix sqrt_derivative(const SymMatrix& s, const Matrix& e) {
  const SpectralDecomposition eig = eig_sym(s);
  require(eig.eigenvalues(0) > 0.0, ErrorCode::InvalidInput,
          "square-root derivative needs a positive definite matrix");
  const Matrix& v = eig.eigenvectors;
  Matrix m = v.transpose() * e * v;
  const Vector r = eig.eigenvalues.cwiseSqrt();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) /= r(i) + r(j);
  }
  return v * m * v.transpose();
}

SqrtLemmaReport check_sqrt_derivative_lemma(const MatrixField& sigma_hat,
                                            std::span<const Vector> points,
                                            std::size_t dirs_per_point,
                                            double floor, std::uint64_t seed) {
  require(dirs_per_point >= 1, ErrorCode::InvalidInput,
          "need at least one direction per point");
  const double eps = std::numeric_limits<double>::epsilon();
  const MatrixField root = [&](const Vector& p) -> Matrix {
    return psd_sqrt(SymMatrix(sigma_hat(p)), 0.0).matrix();
  };
  SqrtLemmaReport rep;
  Rng rng(seed, 3, Stream::Sampling);
  for (const Vector& x : points) {
    const SymMatrix s(sigma_hat(x));
    const double lam = lambda_min(s);
    if (lam < floor || lam <= 0.0) {
      ++rep.skipped;
      continue;
    }
    ++rep.points;
    const double dm = static_cast<double>(s.dim());
    const double root_norm = psd_sqrt(s, 0.0).frobenius();
    for (std::size_t k = 0; k < dirs_per_point; ++k) {
      const Vector v1 = unit_vector(x.size(), rng);
      const Vector v2 = unit_vector(x.size(), rng);
      const Vector v3 = unit_vector(x.size(), rng);
      const Matrix e1 = fd(sigma_hat, x, {v1});
      const double s1 = e1.norm();
      const double s2 = fd(sigma_hat, x, {v2}).norm();
      const double s3 = fd(sigma_hat, x, {v3}).norm();
      const double s12 = fd(sigma_hat, x, {v1, v2}).norm();
      const double s13 = fd(sigma_hat, x, {v1, v3}).norm();
      const double s23 = fd(sigma_hat, x, {v2, v3}).norm();
      const double s123 = fd(sigma_hat, x, {v1, v2, v3}).norm();

      const Matrix l1m = fd(root, x, {v1});
      const double lhs[3] = {l1m.norm(), fd(root, x, {v1, v2}).norm(),
                             fd(root, x, {v1, v2, v3}).norm()};
      const double a = 0.5 / std::sqrt(lam);
      const double b = 0.25 * std::sqrt(dm) * std::pow(lam, -1.5);
      const double c = 0.375 * dm * std::pow(lam, -2.5);
      const double rhs[3] = {
          a * s1, b * s1 * s2 + a * s12,
          b * (s2 * s13 + s12 * s3) + c * s1 * s2 * s3 + b * s1 * s23 + a * s123};

      rep.first_order_formula_error =
          std::max(rep.first_order_formula_error,
                   (l1m - sqrt_derivative(s, e1)).cwiseAbs().maxCoeff());
      for (int o = 0; o < 3; ++o) {
        const double h = fd_step(o + 1, x.norm());
        const double rel = 10.0 * h * h;
        const double abs_tol = 100.0 * std::pow(2.0, o + 1) * eps *
                               (1.0 + root_norm) / std::pow(2.0 * h, o + 1);
        if (lhs[o] > rhs[o] * (1.0 + rel) + abs_tol) ++rep.violations[static_cast<std::size_t>(o)];
        if (rhs[o] > 0.0) {
          rep.max_ratio[static_cast<std::size_t>(o)] =
              std::max(rep.max_ratio[static_cast<std::size_t>(o)], lhs[o] / rhs[o]);
        }
      }
    }
  }
  return rep;
}

bool ConcentrationReport::pass() const {
  return scaling_pass && large_n && std::all_of(rows.begin(), rows.end(),
                                     [](const ConcentrationRow& r) { return r.pass; });
}

ConcentrationReport check_concentration(const QuadraticFamily& family,
                                        std::span<const std::size_t> n_grid,
                                        double epsilon,
                                        std::size_t repetitions,
                                        std::uint64_t seed) {
  require(repetitions >= 100, ErrorCode::InvalidConfig,
          "concentration checks need at least 100 repetitions");
  require(epsilon > 0.0 && !n_grid.empty(), ErrorCode::InvalidConfig,
          "need a positive epsilon and a non-empty n grid");
  static constexpr const char* kNames[3] = {"mean_perturbation",
                                            "fourth_moment", "outer_product"};
  ConcentrationReport rep;
  const double reps = static_cast<double>(repetitions);

  for (std::size_t g = 0; g < n_grid.size(); ++g) {
    const std::size_t n = n_grid[g];
    std::size_t exceed[3] = {0, 0, 0};
    int d = 0;
    for (std::size_t r = 0; r < repetitions; ++r) {
      const std::uint64_t model_seed =
          Rng::derive(seed, g * repetitions + r, Stream::Model);
      const auto model = family(n, model_seed);
      d = static_cast<int>(model->dim());
      const Matrix& rot = model->rotation();
      const Matrix& a = model->samples();
      Rng rng(model_seed, 0, Stream::Projection);
      const Vector v = unit_vector(d, rng);
      const Vector v1 = unit_vector(d, rng);
      const Vector v2 = unit_vector(d, rng);

      const Vector mean_a = a.colwise().mean().transpose();
      const Vector z1 = rot * mean_a.cwiseProduct(rot.transpose() * v);
      exceed[0] += z1.norm() > epsilon;

      CompensatedSum m4;
      for (Eigen::Index i = 0; i < a.rows(); ++i) {
        const double r2 = a.row(i).squaredNorm();
        m4.add(r2 * r2);
      }
      const double dev4 = m4.value() / static_cast<double>(n) -
                          gaussian_norm_moment(d, 4);
      exceed[1] += std::abs(dev4) > epsilon;

      // (1/n) sum R diag(a_i) w1 (R diag(a_i) w2)^T v against its mean
      // R diag(w1) diag(w2) R^T v, where w_k = R^T v_k.
      const Vector w1 = rot.transpose() * v1;
      const Vector w2 = rot.transpose() * v2;
      const Vector u = rot.transpose() * v;
      const Matrix second = a.transpose() * a / static_cast<double>(n);
      const Vector dev3 =
          rot * (w1.asDiagonal() *
                 ((second - Matrix::Identity(d, d)) * w2.cwiseProduct(u)));
      exceed[2] += dev3.norm() > epsilon;
    }
    const double nd = static_cast<double>(n), dd = static_cast<double>(d);
    const double e2 = epsilon * epsilon;
    const double bounds[3] = {dd / (nd * e2),
                              gaussian_norm_moment(d, 8) / (nd * e2),
                              6.0 * std::pow(dd, 6) / (nd * e2)};
    for (int k = 0; k < 3; ++k) {
      ConcentrationRow row;
      row.inequality = kNames[k];
      row.n = n;
      row.rate = static_cast<double>(exceed[k]) / reps;
      row.bound = bounds[k];
      const double b = std::min(bounds[k], 1.0);
      row.std_error = std::sqrt(b * (1.0 - b) / reps);
      row.pass = bounds[k] >= 1.0 || row.rate <= b + 3.0 * row.std_error;
      rep.rows.push_back(row);
    }
  }

  for (const auto& small : rep.rows) {
    for (const auto& big : rep.rows) {
      if (big.inequality != small.inequality || big.n != 4 * small.n) continue;
      if (small.bound >= 1.0) continue;
      const double se = std::sqrt(big.rate * (1 - big.rate) / reps +
                                  small.rate * (1 - small.rate) / (16.0 * reps));
      if (big.rate > small.rate / 4.0 + 3.0 * se) rep.scaling_pass = false;
    }
  }
  return rep;
}

double theorem_eta_max(const ConstantSet& c, double delta) {
  require(c.gamma > 0.0 && c.l > 0.0, ErrorCode::InvalidInput,
          "theorem regime needs gamma > 0 and L > 0");
  const double g = c.gamma, l = c.l;
  double eta = std::min({delta, std::cbrt(g / (432.0 * std::pow(l, 4))),
                         g / (96.0 * l * l), std::sqrt(g / (576.0 * l * l * l)),
                         g / (std::sqrt(6.0 * (1.0 + g)) * 100.0 * l * l),
                         g / (8.0 * l * l)});
  if (c.a3 > 0.0) eta = std::min(eta, g / (48.0 * c.a3));
  return eta;
}

bool theorem_regime(const ConstantSet& c, double eta, double delta) {
  if (!(delta > 0.0 && delta <= 1.0 && eta > 0.0)) return false;
  if (!(c.gamma > 0.0 && c.l > 0.0)) return false;
  return eta <= theorem_eta_max(c, delta);
}

ClosedFormResidual quadratic_sigma_residual(const QuadraticAlternateModel& model,
                                            std::size_t pairs, double max_gap,
                                            std::uint64_t seed) {
  const auto d = static_cast<Eigen::Index>(model.dim());
  Rng rng(seed, 4, Stream::Sampling);
  ClosedFormResidual res;
  res.pairs = pairs;
  res.tolerance = std::sqrt(600.0 * std::pow(static_cast<double>(d), 6) /
                            static_cast<double>(model.size()));
  for (std::size_t p = 0; p < pairs; ++p) {
    Vector x(d);
    for (Eigen::Index j = 0; j < d; ++j) x(j) = rng.normal();
    const Vector y = x - max_gap * rng.uniform() * unit_vector(d, rng);
    const Matrix diff =
        sigma_enumerated(model, x, y).matrix() -
        quadratic_sigma_closed_form(model, x, y, Orientation::Transposed);
    const double r = diff.norm();
    res.max_residual = std::max(res.max_residual, r);
    res.within += r <= res.tolerance;
  }
  return res;
}

bool AssumptionReport::pass() const {
  bool ok = dissipativity.dissipative && assumption4.pass();
  if (sigma_closed_form) {
    ok = ok && sigma_closed_form->within * 20 >= sigma_closed_form->pairs * 19;
  }
  if (sqrt_lemma) ok = ok && sqrt_lemma->pass();
  if (concentration) ok = ok && concentration->pass();
  return ok;
}

AssumptionReport run_verification(const ObjectiveModel& model,
                                  const VerifyOptions& o) {
  const DiffusionSpec spec{&model, o.eta, o.delta};
  spec.validate();
  AssumptionReport rep;
  rep.eta = o.eta;
  rep.delta = o.delta;
  rep.smoothness = estimate_smoothness(model, o.smoothness_trials, o.radius, o.seed);
  rep.dissipativity =
      estimate_dissipativity(model, o.dissipativity_trials, o.radius, o.seed);
  rep.assumption4 =
      check_assumption4(spec, o.assumption4_trials, o.derivative_radius, o.seed);

  const auto d = static_cast<Eigen::Index>(model.dim());
  {
    Rng rng(o.seed, 5, Stream::Sampling);
    const Vector y0 = point_in_ball(d, o.derivative_radius, rng);
    std::vector<Vector> points;
    for (int p = 0; p < 20; ++p) points.push_back(point_in_ball(d, o.derivative_radius, rng));
    const MatrixField family = [&](const Vector& x) -> Matrix {
      return sigma(model, x, y0).matrix() +
             spec.ridge() * Matrix::Identity(d, d);
    };
    rep.sqrt_lemma = check_sqrt_derivative_lemma(family, points, 2, 0.0, o.seed);
  }

  if (const auto* q = dynamic_cast<const QuadraticAlternateModel*>(&model)) {
    rep.sigma_closed_form = quadratic_sigma_residual(*q, 20, 2.0, o.seed);
    const std::size_t n = q->size();
    const std::size_t grid[2] = {n, 4 * n};
    const double eps =
        std::sqrt(static_cast<double>(d) / (static_cast<double>(n) * o.concentration_bound));
    const Vector eig = q->eigenvalues();
    rep.concentration = check_concentration(
        [&](std::size_t nn, std::uint64_t s) {
          return generate_quadratic_model(static_cast<std::size_t>(d), nn, eig, s);
        },
        grid, eps, o.concentration_repetitions, o.seed);
    rep.concentration->perturbation_radius =
        std::sqrt(static_cast<double>(d) / (static_cast<double>(n) * 0.01));
    rep.concentration->min_eigenvalue = eig.minCoeff();
    rep.concentration->large_n =
        rep.concentration->perturbation_radius < rep.concentration->min_eigenvalue;
  }

  const ConstantSet c{rep.dissipativity.gamma_hat, rep.smoothness.l_hat,
                      rep.assumption4.a_hat[2]};
  if (rep.dissipativity.dissipative && c.l > 0.0) {
    rep.eta_max = theorem_eta_max(c, o.delta);
    rep.theorem_regime = theorem_regime(c, o.eta, o.delta);
  }
  return rep;
}

std::string to_json(const AssumptionReport& r) {
  using nlohmann::json;
  json j;
  j["eta"] = r.eta;
  j["delta"] = r.delta;
  j["L_hat"] = r.smoothness.l_hat;
  j["L_full_hat"] = r.smoothness.l_full_hat;
  j["dissipative"] = r.dissipativity.dissipative;
  j["gamma_hat"] = r.dissipativity.gamma_hat;
  j["K_hat"] = r.dissipativity.k_hat;
  j["A"] = r.assumption4.a_hat;
  j["A3_over_eta_delta"] = r.assumption4.a3_normalized;
  json ceilings = json::object();
  for (const auto& c : r.assumption4.ceilings) {
    ceilings[c.name] = {{"value", c.value}, {"ceiling", c.ceiling}, {"pass", c.pass}};
  }
  j["assumption4"] = ceilings;

  json lemma = json::object();
  if (r.sigma_closed_form) {
    const auto& s = *r.sigma_closed_form;
    lemma["sigma_closed_form"] = {{"pairs", s.pairs},
                                  {"within", s.within},
                                  {"max_residual", s.max_residual},
                                  {"tolerance", s.tolerance}};
  }
  if (r.sqrt_lemma) {
    const auto& s = *r.sqrt_lemma;
    lemma["sqrt_derivative"] = {{"points", s.points},
                                {"skipped", s.skipped},
                                {"max_ratio", s.max_ratio},
                                {"violations", s.violations},
                                {"first_order_formula_error", s.first_order_formula_error},
                                {"pass", s.pass()}};
  }
  j["lemma_residuals"] = lemma;

  json conc = json::object();
  if (r.concentration) {
    for (const auto& row : r.concentration->rows) {
      conc[row.inequality + "@" + std::to_string(row.n)] = {
          {"rate", row.rate}, {"bound", row.bound}, {"pass", row.pass}};
    }
    conc["scaling_pass"] = r.concentration->scaling_pass;
    conc["perturbation_radius_1pct"] = r.concentration->perturbation_radius;
    conc["min_eigenvalue"] = r.concentration->min_eigenvalue;
    conc["large_n"] = r.concentration->large_n;
  }
  j["concentration"] = conc;
  j["eta_max"] = r.eta_max;
  j["theorem_regime"] = r.theorem_regime;
  j["pass"] = r.pass();
  j["note"] = "sampled maxima are lower bounds on the true suprema";
  return j.dump(2);
}

}  // namespace svrgld
