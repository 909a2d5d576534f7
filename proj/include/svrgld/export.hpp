#pragma once

#include "svrgld/svrgld.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace svrgld {

inline constexpr std::string_view kPathsSchema = "svrgld-paths/1";
inline constexpr std::string_view kMomentsSchema = "svrgld-moments/1";
inline constexpr std::string_view kW1Schema = "svrgld-w1/1";
inline constexpr std::string_view kMetricsSchema = "svrgld-metrics/1";

/// %.17g, so every double round-trips.
std::string format_double(double v);

/// component,replica,s,x_1..x_d
std::string paths_csv(const Ensemble& ens);

/// component,s,m1,m2,m4,m8
std::string moments_csv(const Ensemble& ens);

struct W1Row {
  double eta = 0.0;
  double delta = 0.0;
  std::size_t s = 0;
  double w1 = 0.0;
  double std_error = 0.0;
};

/// eta,delta,s,w1,stderr,sqrt_eta_delta
std::string w1_table_csv(const std::vector<W1Row>& rows);

struct MetricsRow {
  std::size_t s = 0;
  double eta = 0.0;
  double delta = 0.0;
  double w1_mean = 0.0;
  double w1_stderr = 0.0;
  double m2_a = 0.0, m2_b = 0.0, m4_a = 0.0, m4_b = 0.0;
};

/// s,eta,delta,w1_mean,w1_stderr,m2_a,m2_b,m4_a,m4_b
std::string metrics_csv(const std::vector<MetricsRow>& rows);

/// Least-squares fit of E|x_{s+1}|^4 = rho E|x_s|^4 + c over the recorded
/// epochs, with the envelope E|x_0|^4 + c / (1 - rho) when rho < 1.
struct FourthMomentFit {
  double rho = 0.0;
  double c = 0.0;
  double envelope = 0.0;  // +inf when rho >= 1
  double max_m4 = 0.0;
  double max_residual = 0.0;
};
FourthMomentFit fit_fourth_moment(const Ensemble& ens);

/// JSON with the run configuration and per-epoch moments.
std::string ensemble_summary_json(const Ensemble& ens);

std::uint64_t fnv1a64(std::string_view bytes);

/// Append-only experiment directory: files are created once and never
/// overwritten; each write appends "name<TAB>bytes<TAB>fnv1a64" to MANIFEST.
class OutputDir {
 public:
  explicit OutputDir(std::filesystem::path dir);
  void write(const std::string& name, std::string_view content);
  const std::filesystem::path& path() const { return dir_; }

 private:
  std::filesystem::path dir_;
};

}  // namespace svrgld
