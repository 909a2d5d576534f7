#include "svrgld/export.hpp"

#include "svrgld/error.hpp"
#include "svrgld/metrics.hpp"

#include <nlohmann/json.hpp>

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace svrgld {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

std::string header(std::string_view schema, std::string_view columns) {
  std::string out = "# schema: ";
  out += schema;
  out += '\n';
  out += columns;
  out += '\n';
  return out;
}

}  // namespace

std::string paths_csv(const Ensemble& ens) {
  const auto d = ens.paths.empty() ? 0 : ens.paths[0].states.cols();
  std::string cols = "component,replica,s";
  for (Eigen::Index j = 0; j < d; ++j) cols += ",x_" + std::to_string(j + 1);
  std::string out = header(kPathsSchema, cols);
  const std::string comp = to_string(ens.component);
  for (std::size_t r = 0; r < ens.replicas(); ++r) {
    const Matrix& st = ens.paths[r].states;
    for (Eigen::Index s = 0; s < st.rows(); ++s) {
      out += comp + ',' + std::to_string(r) + ',' + std::to_string(s);
      for (Eigen::Index j = 0; j < d; ++j) out += ',' + format_double(st(s, j));
      out += '\n';
    }
  }
  return out;
}

std::string moments_csv(const Ensemble& ens) {
  std::string out = header(kMomentsSchema, "component,s,m1,m2,m4,m8");
  const std::string comp = to_string(ens.component);
  for (std::size_t s = 0; s <= ens.epochs(); ++s) {
    const EmpiricalMeasure m = EmpiricalMeasure::from_ensemble(ens, s);
    out += comp + ',' + std::to_string(s);
    for (const int p : {1, 2, 4, 8}) out += ',' + format_double(moment(m, p));
    out += '\n';
  }
  return out;
}

std::string w1_table_csv(const std::vector<W1Row>& rows) {
  std::string out = header(kW1Schema, "eta,delta,s,w1,stderr,sqrt_eta_delta");
  for (const auto& r : rows) {
    out += format_double(r.eta) + ',' + format_double(r.delta) + ',' +
           std::to_string(r.s) + ',' + format_double(r.w1) + ',' +
           format_double(r.std_error) + ',' +
           format_double(std::sqrt(r.eta * r.delta)) + '\n';
  }
  return out;
}

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string out = header(
      kMetricsSchema, "s,eta,delta,w1_mean,w1_stderr,m2_a,m2_b,m4_a,m4_b");
  for (const auto& r : rows) {
    out += std::to_string(r.s);
    for (const double v : {r.eta, r.delta, r.w1_mean, r.w1_stderr, r.m2_a,
                           r.m2_b, r.m4_a, r.m4_b}) {
      out += ',' + format_double(v);
    }
    out += '\n';
  }
  return out;
}

FourthMomentFit fit_fourth_moment(const Ensemble& ens) {
  const std::size_t epochs = ens.epochs();
  require(epochs >= 2, ErrorCode::InvalidInput,
          "fourth-moment fit needs at least two epochs");
  std::vector<double> m4(epochs + 1);
  FourthMomentFit fit;
  for (std::size_t s = 0; s <= epochs; ++s) {
    m4[s] = moment(EmpiricalMeasure::from_ensemble(ens, s), 4);
    fit.max_m4 = std::max(fit.max_m4, m4[s]);
  }
  Matrix a(static_cast<Eigen::Index>(epochs), 2);
  Vector b(static_cast<Eigen::Index>(epochs));
  for (std::size_t s = 0; s < epochs; ++s) {
    a(static_cast<Eigen::Index>(s), 0) = m4[s];
    a(static_cast<Eigen::Index>(s), 1) = 1.0;
    b(static_cast<Eigen::Index>(s)) = m4[s + 1];
  }
  const Vector coef = a.colPivHouseholderQr().solve(b);
  fit.rho = coef(0);
  fit.c = coef(1);
  fit.max_residual = (a * coef - b).cwiseAbs().maxCoeff();
  fit.envelope = fit.rho < 1.0 ? m4[0] + std::max(fit.c, 0.0) / (1.0 - fit.rho)
                               : std::numeric_limits<double>::infinity();
  return fit;
}

std::string ensemble_summary_json(const Ensemble& ens) {
  using nlohmann::json;
  const RunConfig& c = ens.config;
  json j;
  j["component"] = to_string(ens.component);
  j["config"] = {{"eta", c.eta},
                 {"delta", c.delta},
                 {"m", c.m},
                 {"batch", c.batch},
                 {"epochs", c.epochs},
                 {"replicas", c.replicas},
                 {"seed", c.seed},
                 {"substeps", ens.substeps},
                 {"without_replacement", c.without_replacement}};
  j["coupled"] = ens.coupled;
  json moments = json::array();
  for (std::size_t s = 0; s <= ens.epochs(); ++s) {
    const EmpiricalMeasure m = EmpiricalMeasure::from_ensemble(ens, s);
    moments.push_back({{"s", s},
                       {"m1", moment(m, 1)},
                       {"m2", moment(m, 2)},
                       {"m4", moment(m, 4)},
                       {"m8", moment(m, 8)}});
  }
  j["moments"] = moments;
  if (ens.epochs() >= 2) {
    const FourthMomentFit f = fit_fourth_moment(ens);
    j["fourth_moment_fit"] = {{"rho", f.rho},
                              {"c", f.c},
                              {"envelope", std::isfinite(f.envelope) ? json(f.envelope) : json()},
                              {"max_m4", f.max_m4},
                              {"max_residual", f.max_residual}};
  }
  return j.dump(2) + "\n";
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char ch : bytes) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ULL;
  }
  return h;
}

OutputDir::OutputDir(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  require(!ec && std::filesystem::is_directory(dir_), ErrorCode::Io,
          "cannot create output directory " + dir_.string() + ": " + ec.message());
}

void OutputDir::write(const std::string& name, std::string_view content) {
  require(!name.empty() && name.find('/') == std::string::npos &&
              name != "MANIFEST",
          ErrorCode::InvalidInput, "invalid output file name '" + name + "'");
  const auto target = dir_ / name;
  require(!std::filesystem::exists(target), ErrorCode::Io,
          "refusing to overwrite " + target.string());
  {
    std::ofstream out(target, std::ios::binary);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    require(static_cast<bool>(out), ErrorCode::Io, "write failed: " + target.string());
  }
  std::ofstream manifest(dir_ / "MANIFEST", std::ios::binary | std::ios::app);
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016" PRIx64, fnv1a64(content));
  manifest << name << '\t' << content.size() << '\t' << hash << '\n';
  require(static_cast<bool>(manifest), ErrorCode::Io,
          "manifest update failed in " + dir_.string());
}

}  // namespace svrgld
