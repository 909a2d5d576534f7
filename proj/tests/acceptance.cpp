#include "svrgld/error.hpp"
#include "svrgld/export.hpp"
#include "svrgld/metrics.hpp"
#include "svrgld/sdde.hpp"
#include "svrgld/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

using namespace svrgld;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  const char* id;
  const char* name;
  double budget_seconds;
  std::function<Outcome()> run;
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[1024];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

Vector normal_vector(Eigen::Index d, Rng& rng, double scale = 1.0) {
  Vector v(d);
  for (Eigen::Index j = 0; j < d; ++j) v(j) = scale * rng.normal();
  return v;
}

double slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

// Closed-form Sigma against enumeration on a large sample.
Outcome sigma_closed_form() {
  const auto model = generate_quadratic_model(4, 200000, Vector::LinSpaced(4, 1, 2), 101);
  const ClosedFormResidual r = quadratic_sigma_residual(*model, 20, 2.0, 101);
  return {r.within >= 19, fmt("%zu/20 pairs within %.4g (max residual %.4g)", r.within,
                              r.tolerance, r.max_residual)};
}

// Q^2 = Sigma + (delta/eta) I over random models and points.
Outcome sqrt_reconstruction() {
  Rng rng(202);
  std::vector<std::unique_ptr<ObjectiveModel>> pool;
  for (int k = 0; k < 40; ++k) {
    const std::size_t d = 1 + static_cast<std::size_t>(k % 5);
    const std::size_t n = 20 + 5 * static_cast<std::size_t>(k);
    if (k % 2 == 0) {
      pool.push_back(generate_quadratic_model(d, n, Vector::LinSpaced(static_cast<Eigen::Index>(d), 0.5, 2.0),
                                              static_cast<std::uint64_t>(k)));
    } else {
      pool.push_back(generate_logistic_model(d, n, normal_vector(static_cast<Eigen::Index>(d), rng), 0.1,
                                             static_cast<std::uint64_t>(k)));
    }
  }
  double worst = 0.0;
  int fails = 0;
  for (int t = 0; t < 1000; ++t) {
    const ObjectiveModel& m = *pool[static_cast<std::size_t>(t) % pool.size()];
    const auto d = static_cast<Eigen::Index>(m.dim());
    const Vector x = normal_vector(d, rng, 2.0), y = normal_vector(d, rng, 2.0);
    const double delta = 1e-3 + (1 - 1e-3) * rng.uniform();
    const double eta = delta * (1e-3 + (1 - 1e-3) * rng.uniform());
    const DiffusionSpec spec{&m, eta, delta};
    const Matrix s = sigma(m, x, y).matrix();
    const Matrix q = q_factor(spec, x, y).matrix();
    const double res = (q * q - s - (delta / eta) * Matrix::Identity(d, d)).norm();
    const double tol = 1e-10 * (1 + s.norm() + delta * std::sqrt(static_cast<double>(d)) / eta);
    worst = std::max(worst, res / tol);
    fails += res > tol;
  }
  return {fails == 0, fmt("%d/1000 draws over tolerance, worst residual/tolerance %.3g", fails, worst)};
}

// Mean and covariance of the noise in one SVRG-LD step.
Outcome noise_identities() {
  const auto model = generate_logistic_model(3, 50, Vector::Constant(3, 1.0), 0.1, 303);
  const DiffusionSpec spec{model.get(), 0.05, 0.1};
  Vector x(3), anchor(3);
  x << 0.8, -0.4, 0.3;
  anchor << -0.3, 0.9, 0.1;
  const Vector ag = model->full_gradient(anchor);
  const Vector base = x - spec.eta * model->full_gradient(x);
  const int draws = 1000000;
  StepStreams streams(303, 0);
  Matrix v(draws, 3);
  for (int k = 0; k < draws; ++k) {
    v.row(k) = ((svrgld_step(*model, spec, x, anchor, ag, streams) - base) /
                std::sqrt(spec.eta)).transpose();
  }
  const Vector mean = v.colwise().mean().transpose();
  const Matrix c = v.rowwise() - mean.transpose();
  const Matrix cov = c.transpose() * c / (draws - 1.0);
  const Matrix target = spec.eta * sigma(*model, x, anchor).matrix() + spec.delta * Matrix::Identity(3, 3);
  double worst_mean = 0, worst_cov = 0;
  for (int j = 0; j < 3; ++j) {
    worst_mean = std::max(worst_mean, std::abs(mean(j)) / std::sqrt(cov(j, j) / draws));
    for (int l = 0; l < 3; ++l) {
      const double se = std::sqrt(
          (c.col(j).cwiseProduct(c.col(l)).array() - cov(j, l)).square().sum() / (draws - 1.0) / draws);
      worst_cov = std::max(worst_cov, std::abs(cov(j, l) - target(j, l)) / se);
    }
  }
  return {worst_mean <= 5 && worst_cov <= 5,
          fmt("max |mean|/stderr %.2f, max |cov - target|/stderr %.2f", worst_mean, worst_cov)};
}

// W1 between SVRG-LD and the delay SDE along the eta = delta diagonal.
Outcome w1_scaling() {
  const auto model = generate_quadratic_model(1, 100, Vector::Ones(1), 404);
  const double grid[] = {0.04, 0.02, 0.01, 0.005};
  std::vector<double> lx, ly, w1s;
  std::string cells;
  for (const double eta : grid) {
    SddeConfig c;
    c.run.eta = eta;
    c.run.delta = eta;
    c.run.m = 10;
    c.run.epochs = 50;
    c.run.replicas = 20000;
    c.run.seed = 404;
    const Vector x0 = Vector::Ones(1);
    // Shared Gaussian increments: each marginal is still an i.i.d. sample of
    // its law, while the sampling error largely cancels in the comparison.
    const auto [a, b] = run_coupled(*model, c, x0);
    const double w = w1_exact_1d(EmpiricalMeasure::from_ensemble(a, 50),
                                 EmpiricalMeasure::from_ensemble(b, 50));
    SddeConfig ci = c;
    ci.run.seed = independent_seed(c.run.seed);
    const Ensemble bi = run_sdde_em(*model, ci, x0);
    const double wi = w1_exact_1d(EmpiricalMeasure::from_ensemble(a, 50),
                                  EmpiricalMeasure::from_ensemble(bi, 50));
    lx.push_back(std::log(eta * eta));
    ly.push_back(std::log(w));
    w1s.push_back(w);
    cells += fmt(" %.3g:%.3g(indep %.3g)", eta, w, wi);
  }
  const double sl = slope(lx, ly);
  double worst_ratio = 0;
  for (std::size_t i = 1; i < w1s.size(); ++i) worst_ratio = std::max(worst_ratio, w1s[i] / w1s[i - 1]);
  return {sl >= 0.3 && sl <= 0.7 && worst_ratio <= 0.8,
          fmt("slope %.3f, worst adjacent ratio %.3f; eta:w1%s", sl, worst_ratio, cells.c_str())};
}

// Mean-square distance of the delay SDE to the minimizer against its bound.
Outcome minimizer_convergence() {
  Vector eig(2);
  eig << 1.0, 2.0;
  const auto model = generate_quadratic_model(2, 1000, eig, 505);
  const double gamma = estimate_dissipativity(*model, 10000, 10.0, 505).gamma_hat;
  const double l = estimate_smoothness(*model, 10000, 10.0, 505).l_hat;
  SddeConfig c;
  c.run.eta = 0.001;
  c.run.delta = 0.01;
  c.run.m = 20;
  c.run.epochs = 30;
  c.run.replicas = 10000;
  c.run.seed = 505;
  Vector x0(2);
  x0 << 1.0, -1.0;
  const Vector opt = model->minimizer();
  const Ensemble e = run_sdde_em(*model, c, x0);
  const double g = gamma - l * l * c.run.eta;
  if (!(g > 0)) return {false, fmt("gamma_hat - L_hat^2 eta = %.4g is not positive", g)};
  const double mh = static_cast<double>(c.run.m) * c.run.eta;
  const double b = std::exp(-2 * g * mh) + c.run.eta * l * l / g;
  if (!(b < 1)) return {false, fmt("b = %.4g is not below 1", b)};
  double worst = 0;
  for (std::size_t s = 0; s <= 30; ++s) {
    const Matrix st = e.states_at(s).rowwise() - opt.transpose();
    const double ms = st.rowwise().squaredNorm().mean();
    const double bound = 1.2 * (std::pow(b, static_cast<double>(s)) * (x0 - opt).squaredNorm() +
                                c.run.delta * 2 / (2 * g * (1 - b)));
    worst = std::max(worst, ms / bound);
  }
  return {worst <= 1.0, fmt("gamma_hat %.4f, L_hat %.4f, b %.4f, max E|X-w*|^2 / bound %.4f", gamma, l, b, worst)};
}

Matrix expm_sym(const Matrix& h, double t) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(h);
  const Vector e = (-t * es.eigenvalues().array()).exp().matrix();
  return es.eigenvectors() * e.asDiagonal() * es.eigenvectors().transpose();
}

// Decay of the eighth moment of the Jacobian flow.
Outcome jacobian_decay() {
  Vector eig(2);
  eig << 1.0, 1.5;
  const auto model = generate_quadratic_model(2, 500, eig, 606);
  const double gamma = estimate_dissipativity(*model, 10000, 10.0, 606).gamma_hat;
  SddeConfig c;
  c.run.eta = 0.01;
  c.run.delta = 0.01;
  c.run.m = 10;
  c.run.epochs = 50;
  c.run.replicas = 2000;
  c.run.seed = 606;
  Vector v(2);
  v << 0.6, 0.8;
  const auto paths = run_jacobian_flow(*model, c, Vector::Constant(2, 1.0), v);
  std::vector<double> t, logm8;
  for (Eigen::Index k = 0; k <= 500; k += 10) {
    double m8 = 0;
    for (const auto& p : paths) m8 += std::pow(p.jacobian.row(k).squaredNorm(), 4);
    m8 /= static_cast<double>(paths.size());
    t.push_back(static_cast<double>(k) * c.run.eta);
    logm8.push_back(std::log(m8));
  }
  const double rate = -slope(t, logm8);

  // n = 1, delta = 0: the flow is deterministic and equals e^{-Ht} v.
  const auto single = generate_quadratic_model(2, 1, Vector::Ones(2), 1);
  SddeConfig d;
  d.run.eta = 0.01;
  d.run.delta = 0.0;
  d.run.m = 10;
  d.run.epochs = 50;
  d.substeps = 4;
  const auto det = run_jacobian_flow(*single, d, Vector::Constant(2, 1.0), v);
  const Matrix heff = single->hessian(Vector::Zero(2));
  const double hn = operator_norm(heff);
  double worst = 0;
  for (Eigen::Index k = 0; k <= 500; k += 5) {
    const double tk = static_cast<double>(k) * d.run.eta;
    const double err = (det[0].jacobian.row(k).transpose() - expm_sym(heff, tk) * v).norm();
    const double tol = 2 * d.h() * tk * hn * std::exp(hn * tk) + 1e-12;
    worst = std::max(worst, err / tol);
  }
  return {rate >= gamma / 2 && worst <= 1.0,
          fmt("decay rate %.3f vs gamma_hat/2 %.3f; deterministic error/tolerance %.3g", rate,
              gamma / 2, worst)};
}

// Gradient of the semigroup along the flow.
Outcome semigroup_bound() {
  const auto model = generate_quadratic_model(1, 100, Vector::Ones(1), 707);
  const double gamma = estimate_dissipativity(*model, 10000, 10.0, 707).gamma_hat;
  SddeConfig c;
  c.run.eta = 0.02;
  c.run.delta = 0.02;
  c.run.m = 10;
  c.run.seed = 707;
  const double times[] = {1.0, 2.0, 4.0};
  const auto est = semigroup_gradient(*model, c, Vector::Constant(1, 0.5), Vector::Ones(1),
                                      clipped_linear(Vector::Ones(1), 1e12), times, 100000);
  bool ok = true;
  std::string cells;
  for (const auto& e : est) {
    const double bound = std::exp(-gamma * e.time / 8);
    ok = ok && e.estimate <= bound + 3 * e.std_error;
    cells += fmt(" t=%g: %.4f (se %.2g) <= %.4f", e.time, e.estimate, e.std_error, bound);
  }
  return {ok, fmt("gamma_hat %.4f;%s", gamma, cells.c_str())};
}

// Geometric contraction of the fourth moment at a theorem-regime step size.
Outcome fourth_moment_contraction() {
  Vector eig(2);
  eig << 1.0, 2.0;
  const auto model = generate_quadratic_model(2, 1000, eig, 808);
  const double delta = 0.1;
  const DiffusionSpec probe{model.get(), delta, delta};
  const ConstantSet k{estimate_dissipativity(*model, 10000, 10.0, 808).gamma_hat,
                      estimate_smoothness(*model, 10000, 10.0, 808).l_hat,
                      check_assumption4(probe, 50, 2.0, 808).a_hat[2]};
  const double eta = theorem_eta_max(k, delta);
  RunConfig c;
  c.eta = eta;
  c.delta = delta;
  c.m = 50;
  c.epochs = 50;
  c.replicas = 4000;
  c.seed = 808;
  Vector x0(2);
  x0 << 1.0, -1.0;
  const Ensemble e = run_svrgld(*model, c, x0);
  const FourthMomentFit f = fit_fourth_moment(e);
  const bool regime = theorem_regime(k, eta, delta);
  return {regime && f.rho < 1 && f.max_m4 <= f.envelope,
          fmt("eta %.3g (theorem regime %s), rho_hat %.4f, C_hat %.3g, sup m4 %.4f <= envelope %.4f, "
              "max residual %.3g",
              eta, regime ? "yes" : "no", f.rho, f.c, f.max_m4, f.envelope, f.max_residual)};
}

double assignment_oracle(const Vector& a, const Vector& b) {
  std::vector<int> perm(static_cast<std::size_t>(a.size()));
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double cost = 0;
    for (std::size_t i = 0; i < perm.size(); ++i) cost += std::abs(a(static_cast<Eigen::Index>(i)) - b(perm[i]));
    best = std::min(best, cost / static_cast<double>(perm.size()));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

// W1 estimator against a Gaussian shift and exhaustive matching.
Outcome w1_calibration() {
  Rng rng(909);
  const int n = 100000;
  Matrix a(n, 1), b(n, 1);
  for (int i = 0; i < n; ++i) {
    a(i, 0) = rng.normal();
    b(i, 0) = 0.5 + rng.normal();
  }
  const double w = w1_exact_1d(EmpiricalMeasure(a), EmpiricalMeasure(b));
  double worst = 0;
  for (int t = 0; t < 500; ++t) {
    const auto k = static_cast<Eigen::Index>(1 + rng.index(8));
    const Vector x = normal_vector(k, rng), y = normal_vector(k, rng);
    worst = std::max(worst, std::abs(w1_exact_1d(EmpiricalMeasure(Matrix(x)), EmpiricalMeasure(Matrix(y))) -
                                     assignment_oracle(x, y)));
  }
  return {std::abs(w - 0.5) <= 0.02 && worst <= 1e-12,
          fmt("W1 %.4f vs 0.5; max deviation from assignment oracle %.3g over 500 clouds", w, worst)};
}

// Derivative ceilings for both example models.
Outcome assumption4_ceilings() {
  const auto quad = generate_quadratic_model(3, 100000, Vector::LinSpaced(3, 1, 2), 1010);
  const auto logi = generate_logistic_model(3, 1000, Vector::Constant(3, 1.0), 0.1, 1010);
  const Assumption4Report q = check_assumption4({quad.get(), 0.01, 0.01}, 100, 2.0, 1010);
  const Assumption4Report l = check_assumption4({logi.get(), 0.005, 0.01}, 100, 2.0, 1010);
  std::string failed;
  for (const auto* r : {&q, &l}) {
    for (const auto& c : r->ceilings) {
      if (!c.pass) failed += fmt(" %s(%s %.4g > %.4g)", r == &q ? "quadratic" : "logistic", c.name.c_str(), c.value, c.ceiling);
    }
  }
  const auto find = [](const Assumption4Report& r, const char* name) {
    for (const auto& c : r.ceilings) if (c.name == name) return c;
    return Ceiling{};
  };
  return {q.pass() && l.pass() && q.ceilings.size() == 6 && l.ceilings.size() == 6,
          fmt("quadratic A1 %.3g A2 %.3g |d1 Q| %.4g <= %.4g; logistic |d1 Q| %.4g <= %.4g, "
              "|d3 grad P| %.4g <= %.4g%s",
              q.a_hat[0], q.a_hat[1], q.dq1, find(q, "d1_q").ceiling, l.dq1, find(l, "d1_q").ceiling,
              l.d3_grad, find(l, "d3_grad").ceiling, failed.c_str())};
}

std::map<std::string, std::uint64_t> hashes(const std::filesystem::path& dir) {
  std::map<std::string, std::uint64_t> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    std::ifstream in(entry.path(), std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    if (name.rfind("timing.", 0) == 0) continue;
    if (name == "MANIFEST") {
      std::istringstream lines(bytes);
      std::string kept, line;
      while (std::getline(lines, line)) {
        if (line.rfind("timing.", 0) != 0) kept += line + "\n";
      }
      bytes = kept;
    }
    out[name] = fnv1a64(bytes);
  }
  return out;
}

// Every CLI command reproduces its outputs bit for bit.
Outcome determinism() {
  const auto root = std::filesystem::temp_directory_path() /
                    ("svrgld_acceptance_" + std::to_string(getpid()));
  std::filesystem::remove_all(root);
  std::filesystem::create_directories(root);
  const std::string cli = SVRGLD_CLI_PATH;
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"gen-model", "--set model.d=4 --set model.n=100000"},
      {"gen-model", "--set model.type=logistic --set model.d=3 --set model.true_param=[0,0,0]"},
      {"run", "--set run.which=both --set run.coupled=true --set run.epochs=5 --replicas 50"},
      {"run", "--set run.which=both --set run.substeps=2 --set run.epochs=4 --replicas 40"},
      {"moments", "--set run.epochs=6 --replicas 60 --set model.type=logistic"},
      {"w1-sweep",
       "--set model.d=1 --set model.n=50 --set run.epochs=3 --replicas 200 "
       "--set sweep.eta_grid=[0.02,0.01] --set sweep.delta_grid=[0.02,0.01] --set sweep.mode=zip"},
      {"verify",
       "--set model.n=5000 --set verify.smoothness_trials=500 --set verify.dissipativity_trials=500 "
       "--set verify.assumption4_trials=10 --set verify.concentration_repetitions=100"},
  };
  std::string detail;
  bool ok = true;
  std::size_t files = 0;
  for (std::size_t i = 0; i < commands.size(); ++i) {
    std::map<std::string, std::uint64_t> runs[2];
    for (int rep = 0; rep < 2; ++rep) {
      // Same --out both times: the resolved config records the directory.
      const auto work = root / "work";
      const auto dir = root / (std::to_string(i) + "_" + std::to_string(rep));
      const std::string cmd = cli + " " + commands[i].first + " --seed 11 --out " + work.string() + " " +
                              commands[i].second + " > /dev/null 2>&1";
      const int status = std::system(cmd.c_str());
      if (status != 0) {
        ok = false;
        detail += fmt(" [%s exited with %d]", commands[i].first.c_str(), status);
      }
      if (std::filesystem::exists(work)) std::filesystem::rename(work, dir);
      else std::filesystem::create_directories(dir);
      runs[rep] = hashes(dir);
    }
    if (runs[0] != runs[1] || runs[0].empty()) {
      ok = false;
      detail += fmt(" [%s outputs differ]", commands[i].first.c_str());
    }
    files += runs[0].size();
  }
  std::filesystem::remove_all(root);
  return {ok, fmt("%zu commands, %zu files compared by FNV-1a hash%s", commands.size(), files, detail.c_str())};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {"C1", "sigma closed form", 30, sigma_closed_form},
      {"C2", "square-root reconstruction", 10, sqrt_reconstruction},
      {"C3", "noise identities", 60, noise_identities},
      {"C4", "W1 scaling", 600, w1_scaling},
      {"C5", "minimizer convergence", 300, minimizer_convergence},
      {"C6", "Jacobian-flow decay", 120, jacobian_decay},
      {"C7", "semigroup gradient", 120, semigroup_bound},
      {"C8", "fourth-moment contraction", 120, fourth_moment_contraction},
      {"C9", "W1 estimator calibration", 10, w1_calibration},
      {"C10", "derivative ceilings", 60, assumption4_ceilings},
      {"C11", "determinism", 120, determinism},
  };
  std::vector<std::string> only(argv + 1, argv + argc);
  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs <= c.budget_seconds;
    const bool pass = o.pass && in_time;
    failures += !pass;
    std::printf("%s %-4s %-28s %s (%.1f s of %.0f s%s)\n", pass ? "PASS" : "FAIL", c.id, c.name,
                o.detail.c_str(), secs, c.budget_seconds, in_time ? "" : ", over budget");
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
