#include "svrgld/svrgld_c.h"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

using nlohmann::json;

namespace {

// Raised for any failure: a library status or a bad config.
struct CliError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void check(svl_status st, const char* what) {
  if (st != SVL_OK) {
    throw CliError(std::string(what) + ": " + svl_status_name(st) + ": " +
                   svl_last_error());
  }
}

struct ModelDeleter {
  void operator()(svl_model* m) const { svl_model_free(m); }
};
struct EnsembleDeleter {
  void operator()(svl_ensemble* e) const { svl_ensemble_free(e); }
};
struct OutputDeleter {
  void operator()(svl_output* o) const { svl_output_close(o); }
};
using ModelPtr = std::unique_ptr<svl_model, ModelDeleter>;
using EnsemblePtr = std::unique_ptr<svl_ensemble, EnsembleDeleter>;
using OutputPtr = std::unique_ptr<svl_output, OutputDeleter>;

std::string take(char* s) {
  std::string out(s ? s : "");
  svl_string_free(s);
  return out;
}

json defaults() {
  return json::parse(R"({
    "seed": 0,
    "model": {"type": "quadratic", "d": 2, "n": 1000, "lambda": 0.1,
              "eigenvalues": null, "true_param": null, "seed": null,
              "path": null, "format": "binary"},
    "run": {"which": "svrgld", "eta": 0.01, "delta": 0.01, "m": 10,
            "batch": 1, "epochs": 20, "replicas": 100, "substeps": 1,
            "coupled": false, "record_inner": false,
            "without_replacement": false, "threads": 0, "x0": null},
    "sweep": {"eta_grid": [], "delta_grid": [], "mode": "product",
              "coupled": false, "projections": 128},
    "verify": {"smoothness_trials": 10000, "dissipativity_trials": 10000,
               "assumption4_trials": 200, "radius": 10.0,
               "derivative_radius": 2.0, "concentration_repetitions": 200,
               "concentration_bound": 0.1},
    "output": {"dir": "out", "formats": ["csv", "json"]}
  })");
}

void merge(json& base, const json& over, const std::string& prefix) {
  if (!over.is_object()) throw CliError("config section '" + prefix + "' must be an object");
  for (auto it = over.begin(); it != over.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!base.contains(it.key())) throw CliError("unknown config key '" + key + "'");
    json& slot = base[it.key()];
    if (slot.is_object()) {
      merge(slot, it.value(), key);
    } else {
      slot = it.value();
    }
  }
}

void apply_set(json& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw CliError("--set expects key=value, got '" + assignment + "'");
  }
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;

  json patch = value;
  std::string rest = path;
  std::vector<std::string> keys;
  for (std::size_t pos; (pos = rest.find('.')) != std::string::npos;) {
    keys.push_back(rest.substr(0, pos));
    rest = rest.substr(pos + 1);
  }
  keys.push_back(rest);
  for (auto k = keys.rbegin(); k != keys.rend(); ++k) patch = json{{*k, patch}};
  merge(cfg, patch, "");
}

template <class T>
T get(const json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw CliError(std::string("config key '") + key + "': " + e.what());
  }
}

std::vector<double> vector_or(const json& j, std::size_t d, double fill) {
  if (j.is_null()) return std::vector<double>(d, fill);
  auto v = j.get<std::vector<double>>();
  if (v.size() != d) throw CliError("vector length does not match model dimension");
  return v;
}

ModelPtr make_model(const json& cfg) {
  const json& m = cfg["model"];
  const auto type = get<std::string>(m, "type");
  svl_model* out = nullptr;
  if (type == "file") {
    if (m["path"].is_null()) throw CliError("model.path is required for type 'file'");
    check(svl_model_load(get<std::string>(m, "path").c_str(), &out), "load model");
    return ModelPtr(out);
  }
  const auto d = get<std::size_t>(m, "d");
  const auto n = get<std::size_t>(m, "n");
  const std::uint64_t seed =
      m["seed"].is_null() ? get<std::uint64_t>(cfg, "seed") : get<std::uint64_t>(m, "seed");
  if (type == "quadratic") {
    std::vector<double> eig;
    if (m["eigenvalues"].is_null()) {
      for (std::size_t j = 0; j < d; ++j) {
        eig.push_back(d == 1 ? 1.0 : 1.0 + static_cast<double>(j) / static_cast<double>(d - 1));
      }
    } else {
      eig = vector_or(m["eigenvalues"], d, 1.0);
    }
    check(svl_model_generate_quadratic(d, n, eig.data(), seed, &out), "generate model");
  } else if (type == "logistic") {
    const auto w = vector_or(m["true_param"], d, 1.0);
    check(svl_model_generate_logistic(d, n, w.data(), get<double>(m, "lambda"), seed, &out),
          "generate model");
  } else {
    throw CliError("model.type must be quadratic, logistic or file");
  }
  return ModelPtr(out);
}

svl_run_config run_config(const json& cfg) {
  const json& r = cfg["run"];
  svl_run_config c;
  svl_run_config_default(&c);
  c.eta = get<double>(r, "eta");
  c.delta = get<double>(r, "delta");
  c.m = get<std::size_t>(r, "m");
  c.batch = get<std::size_t>(r, "batch");
  c.epochs = get<std::size_t>(r, "epochs");
  c.replicas = get<std::size_t>(r, "replicas");
  c.substeps = get<std::size_t>(r, "substeps");
  c.seed = get<std::uint64_t>(cfg, "seed");
  c.record_inner = get<bool>(r, "record_inner");
  c.without_replacement = get<bool>(r, "without_replacement");
  c.threads = get<unsigned>(r, "threads");
  return c;
}

std::vector<double> initial_point(const json& cfg, const svl_model* model) {
  std::size_t d = 0;
  check(svl_model_dim(model, &d), "model dimension");
  return vector_or(cfg["run"]["x0"], d, 1.0);
}

bool wants(const json& cfg, const char* format) {
  for (const auto& f : cfg["output"]["formats"]) {
    if (f == format) return true;
  }
  return false;
}

class Output {
 public:
  explicit Output(const std::string& dir) {
    svl_output* o = nullptr;
    check(svl_output_open(dir.c_str(), &o), "open output directory");
    out_.reset(o);
  }
  void write(const std::string& name, const std::string& content) {
    check(svl_output_write(out_.get(), name.c_str(), content.data(), content.size()),
          "write output");
  }

 private:
  OutputPtr out_;
};

struct Pair {
  EnsemblePtr a, b;
};

Pair run_processes(const json& cfg, const svl_model* model, const std::string& which,
                   bool coupled) {
  const svl_run_config c = run_config(cfg);
  const auto x0 = initial_point(cfg, model);
  Pair p;
  svl_ensemble* a = nullptr;
  svl_ensemble* b = nullptr;
  if (which == "both" && coupled) {
    check(svl_run_coupled(model, &c, x0.data(), &a, &b), "coupled run");
    p.a.reset(a);
    p.b.reset(b);
    return p;
  }
  if (which == "svrgld" || which == "both") {
    check(svl_run_svrgld(model, &c, x0.data(), &a), "svrgld run");
    p.a.reset(a);
  }
  if (which == "sdde" || which == "both") {
    svl_run_config sc = c;
    if (which == "both") sc.seed = svl_independent_seed(c.seed);
    check(svl_run_sdde(model, &sc, x0.data(), &b), "sdde run");
    p.b.reset(b);
  }
  if (!p.a && !p.b) throw CliError("run.which must be svrgld, sdde or both");
  return p;
}

std::vector<svl_metrics_row> compare(const svl_ensemble* a, const svl_ensemble* b,
                                     const svl_run_config& c, std::size_t projections) {
  std::size_t epochs = 0;
  check(svl_ensemble_shape(a, nullptr, &epochs, nullptr), "ensemble shape");
  std::vector<svl_metrics_row> rows;
  for (std::size_t s = 0; s <= epochs; ++s) {
    svl_metrics_row r{};
    r.s = s;
    r.eta = c.eta;
    r.delta = c.delta;
    check(svl_w1(a, b, s, projections, c.seed + s, &r.w1_mean, &r.w1_stderr), "w1");
    check(svl_ensemble_moment(a, s, 2, &r.m2_a), "moment");
    check(svl_ensemble_moment(b, s, 2, &r.m2_b), "moment");
    check(svl_ensemble_moment(a, s, 4, &r.m4_a), "moment");
    check(svl_ensemble_moment(b, s, 4, &r.m4_b), "moment");
    rows.push_back(r);
  }
  return rows;
}

void write_ensemble(Output& out, const json& cfg, const svl_ensemble* e,
                    const char* component, bool with_paths) {
  char* text = nullptr;
  const std::string c = component;
  if (wants(cfg, "csv")) {
    if (with_paths) {
      check(svl_ensemble_paths_csv(e, &text), "paths csv");
      out.write("paths_" + c + ".csv", take(text));
    }
    check(svl_ensemble_moments_csv(e, &text), "moments csv");
    out.write("moments_" + c + ".csv", take(text));
  }
  if (wants(cfg, "json")) {
    check(svl_ensemble_summary_json(e, &text), "summary");
    out.write("summary_" + c + ".json", take(text));
  }
}

int cmd_gen_model(const json& cfg, Output& out) {
  const ModelPtr model = make_model(cfg);
  const bool text = cfg["model"]["format"] == "text";
  const std::string name = text ? "model.txt" : "model.bin";
  const std::string dir = get<std::string>(cfg["output"], "dir");
  check(svl_model_save(model.get(), (dir + "/" + name + ".tmp").c_str(), text ? 1 : 0),
        "save model");
  std::string bytes;
  {
    std::ifstream in(dir + "/" + name + ".tmp", std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  std::remove((dir + "/" + name + ".tmp").c_str());
  out.write(name, bytes);

  char* info = nullptr;
  check(svl_model_info_json(model.get(), &info), "model info");
  json prov = json::parse(take(info));
  prov["root_seed"] = cfg["seed"];
  prov["file"] = name;
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx",
                static_cast<unsigned long long>(svl_fnv1a64(bytes.data(), bytes.size())));
  prov["fnv1a64"] = hash;
  out.write("provenance.json", prov.dump(2) + "\n");
  return 0;
}

int cmd_run(const json& cfg, Output& out, bool with_paths) {
  const ModelPtr model = make_model(cfg);
  const auto which = get<std::string>(cfg["run"], "which");
  const bool coupled = get<bool>(cfg["run"], "coupled");
  const Pair p = run_processes(cfg, model.get(), which, coupled);
  if (p.a) write_ensemble(out, cfg, p.a.get(), "svrgld", with_paths);
  if (p.b) write_ensemble(out, cfg, p.b.get(), "sdde", with_paths);
  if (p.a && p.b) {
    const svl_run_config c = run_config(cfg);
    const auto rows =
        compare(p.a.get(), p.b.get(), c, get<std::size_t>(cfg["sweep"], "projections"));
    char* csv = nullptr;
    check(svl_metrics_csv(rows.data(), rows.size(), &csv), "metrics csv");
    out.write("metrics.csv", take(csv));
    if (coupled) {
      std::string text = "# schema: svrgld-coupled/1\ns,d1,d2\n";
      for (const auto& r : rows) {
        double d1 = 0, d2 = 0;
        check(svl_coupled_distance(p.a.get(), p.b.get(), r.s, 1, &d1), "coupled distance");
        check(svl_coupled_distance(p.a.get(), p.b.get(), r.s, 2, &d2), "coupled distance");
        char line[96];
        std::snprintf(line, sizeof line, "%zu,%.17g,%.17g\n", r.s, d1, d2);
        text += line;
      }
      out.write("coupled.csv", text);
    }
  }
  return 0;
}

int cmd_w1_sweep(const json& cfg, Output& out) {
  const auto etas = cfg["sweep"]["eta_grid"].get<std::vector<double>>();
  const auto deltas = cfg["sweep"]["delta_grid"].get<std::vector<double>>();
  if (etas.empty() || deltas.empty()) throw CliError("sweep grids must be nonempty");
  const auto mode = get<std::string>(cfg["sweep"], "mode");
  std::vector<std::pair<double, double>> cells;
  if (mode == "zip") {
    if (etas.size() != deltas.size()) throw CliError("zip sweep needs equal grid lengths");
    for (std::size_t i = 0; i < etas.size(); ++i) cells.emplace_back(etas[i], deltas[i]);
  } else if (mode == "product") {
    for (const double e : etas)
      for (const double d : deltas) cells.emplace_back(e, d);
  } else {
    throw CliError("sweep.mode must be product or zip");
  }

  const ModelPtr model = make_model(cfg);
  const auto projections = get<std::size_t>(cfg["sweep"], "projections");
  std::vector<svl_w1_row> table;
  std::vector<svl_metrics_row> metrics;
  json skipped = json::array();
  for (const auto& [eta, delta] : cells) {
    if (eta > delta) {
      skipped.push_back({{"eta", eta}, {"delta", delta}});
      continue;
    }
    json cell = cfg;
    cell["run"]["eta"] = eta;
    cell["run"]["delta"] = delta;
    const Pair p = run_processes(cell, model.get(), "both", get<bool>(cfg["sweep"], "coupled"));
    const auto rows = compare(p.a.get(), p.b.get(), run_config(cell), projections);
    for (const auto& r : rows) {
      table.push_back({eta, delta, r.s, r.w1_mean, r.w1_stderr});
      metrics.push_back(r);
    }
  }

  char* csv = nullptr;
  check(svl_w1_table_csv(table.data(), table.size(), &csv), "w1 table");
  out.write("w1_table.csv", take(csv));
  check(svl_metrics_csv(metrics.data(), metrics.size(), &csv), "metrics csv");
  out.write("metrics.csv", take(csv));

  // Least-squares slope of log w1 against log(eta delta) per epoch.
  json slopes = json::array();
  std::size_t max_s = 0;
  for (const auto& r : table) max_s = std::max(max_s, r.s);
  for (std::size_t s = 1; s <= max_s; ++s) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int k = 0;
    bool usable = true;
    for (const auto& r : table) {
      if (r.s != s) continue;
      if (!(r.w1 > 0)) usable = false;
      const double x = std::log(r.eta * r.delta), y = std::log(r.w1);
      sx += x; sy += y; sxx += x * x; sxy += x * y;
      ++k;
    }
    if (!usable || k < 2 || sxx * k == sx * sx) continue;
    slopes.push_back({{"s", s}, {"slope", (k * sxy - sx * sy) / (k * sxx - sx * sx)}});
  }
  json summary;
  summary["cells"] = cells.size() - skipped.size();
  summary["skipped"] = skipped;
  summary["loglog_slopes"] = slopes;
  out.write("sweep_summary.json", summary.dump(2) + "\n");
  return 0;
}

int cmd_verify(const json& cfg, Output& out) {
  const ModelPtr model = make_model(cfg);
  svl_verify_options o;
  svl_verify_options_default(&o);
  const json& v = cfg["verify"];
  o.eta = get<double>(cfg["run"], "eta");
  o.delta = get<double>(cfg["run"], "delta");
  o.smoothness_trials = get<std::size_t>(v, "smoothness_trials");
  o.dissipativity_trials = get<std::size_t>(v, "dissipativity_trials");
  o.assumption4_trials = get<std::size_t>(v, "assumption4_trials");
  o.radius = get<double>(v, "radius");
  o.derivative_radius = get<double>(v, "derivative_radius");
  o.concentration_repetitions = get<std::size_t>(v, "concentration_repetitions");
  o.concentration_bound = get<double>(v, "concentration_bound");
  o.seed = get<std::uint64_t>(cfg, "seed");
  char* report = nullptr;
  int pass = 0;
  check(svl_verify(model.get(), &o, &report, &pass), "verify");
  const std::string text = take(report);
  out.write("report.json", text);
  std::fputs(text.c_str(), stdout);
  return pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SVRG-LD and delay-SDE experiments"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_dir;
  std::size_t replicas = 0;
  unsigned threads = 0;
  std::vector<std::string> sets;
  auto* seed_opt = app.add_option("--seed", seed, "Root seed");
  auto* out_opt = app.add_option("--out", out_dir, "Output directory");
  auto* rep_opt = app.add_option("--replicas", replicas, "Replica count");
  auto* thr_opt = app.add_option("--threads", threads, "Worker threads");
  app.add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--set", sets, "Override a config key: key.path=value");

  app.add_subcommand("gen-model", "Generate and save a model");
  app.add_subcommand("run", "Run SVRG-LD, the delay SDE, or both");
  app.add_subcommand("w1-sweep", "W1 between the two processes over an (eta, delta) grid");
  app.add_subcommand("verify", "Check model assumptions; exit 1 when a check fails");
  app.add_subcommand("moments", "Per-epoch moments and the fourth-moment fit");

  CLI11_PARSE(app, argc, argv);
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    json cfg = defaults();
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      json user = json::parse(in, nullptr, false);
      if (user.is_discarded()) throw CliError("cannot parse config " + config_path);
      merge(cfg, user, "");
    }
    for (const auto& s : sets) apply_set(cfg, s);
    if (*seed_opt) cfg["seed"] = seed;
    if (*out_opt) cfg["output"]["dir"] = out_dir;
    if (*rep_opt) cfg["run"]["replicas"] = replicas;
    if (*thr_opt) cfg["run"]["threads"] = threads;

    const auto start = std::chrono::steady_clock::now();
    Output out(get<std::string>(cfg["output"], "dir"));
    out.write("config." + command + ".json", cfg.dump(2) + "\n");

    int code = 0;
    if (command == "gen-model") code = cmd_gen_model(cfg, out);
    else if (command == "run") code = cmd_run(cfg, out, true);
    else if (command == "moments") code = cmd_run(cfg, out, false);
    else if (command == "w1-sweep") code = cmd_w1_sweep(cfg, out);
    else if (command == "verify") code = cmd_verify(cfg, out);

    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    json timing = {{"command", command}, {"wall_seconds", secs}};
    out.write("timing." + command + ".json", timing.dump(2) + "\n");
    return code;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "svrgld %s: %s\n", command.c_str(), e.what());
    return 2;
  }
}
