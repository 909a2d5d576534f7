#include "svrgld/svrgld_c.h"

#include "svrgld/error.hpp"
#include "svrgld/export.hpp"
#include "svrgld/metrics.hpp"
#include "svrgld/models.hpp"
#include "svrgld/sdde.hpp"
#include "svrgld/verify.hpp"

#include <nlohmann/json.hpp>

#include <cstdlib>
#include <cstring>
#include <exception>
#include <memory>
#include <new>
#include <string>

struct svl_model {
  std::unique_ptr<svrgld::ObjectiveModel> model;
};

struct svl_ensemble {
  svrgld::Ensemble ensemble;
};

struct svl_output {
  svrgld::OutputDir dir;
};

namespace {

thread_local std::string last_error;

svl_status to_status(svrgld::ErrorCode code) {
  return static_cast<svl_status>(static_cast<int>(code));
}

template <class F>
svl_status guarded(F&& body) {
  try {
    body();
    last_error.clear();
    return SVL_OK;
  } catch (const svrgld::Error& e) {
    last_error = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return SVL_INTERNAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return SVL_INTERNAL;
  } catch (...) {
    last_error = "unknown failure";
    return SVL_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  svrgld::require(p != nullptr, svrgld::ErrorCode::InvalidInput,
                  std::string(what) + " must not be null");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

svrgld::Vector to_vector(const double* p, std::size_t n) {
  need(p, "vector argument");
  return Eigen::Map<const svrgld::Vector>(p, static_cast<Eigen::Index>(n));
}

svrgld::SddeConfig to_config(const svl_run_config* c) {
  need(c, "config");
  svrgld::SddeConfig out;
  out.run.eta = c->eta;
  out.run.delta = c->delta;
  out.run.m = c->m;
  out.run.batch = c->batch;
  out.run.epochs = c->epochs;
  out.run.replicas = c->replicas;
  out.run.seed = c->seed;
  out.run.record_inner = c->record_inner != 0;
  out.run.without_replacement = c->without_replacement != 0;
  out.run.threads = c->threads;
  out.substeps = c->substeps;
  out.use_q_cache = c->use_q_cache != 0;
  return out;
}

svl_ensemble* wrap(svrgld::Ensemble e) {
  return new svl_ensemble{std::move(e)};
}

}  // namespace

extern "C" {

const char* svl_last_error(void) { return last_error.c_str(); }

const char* svl_status_name(svl_status status) {
  switch (status) {
    case SVL_OK: return "Ok";
    case SVL_INTERNAL: return "Internal";
    default:
      if (status >= SVL_INVALID_INPUT && status <= SVL_IO) {
        return svrgld::to_string(static_cast<svrgld::ErrorCode>(status));
      }
      return "Unknown";
  }
}

const char* svl_version(void) { return "0.1.0"; }

void svl_string_free(char* s) { std::free(s); }

svl_status svl_model_generate_quadratic(size_t d, size_t n,
                                        const double* eigenvalues,
                                        uint64_t seed, svl_model** out) {
  return guarded([&] {
    need(out, "out");
    auto m = svrgld::generate_quadratic_model(d, n, to_vector(eigenvalues, d), seed);
    *out = new svl_model{std::move(m)};
  });
}

svl_status svl_model_generate_logistic(size_t d, size_t n,
                                       const double* true_param, double lambda,
                                       uint64_t seed, svl_model** out) {
  return guarded([&] {
    need(out, "out");
    auto m = svrgld::generate_logistic_model(d, n, to_vector(true_param, d),
                                             lambda, seed);
    *out = new svl_model{std::move(m)};
  });
}

svl_status svl_model_load(const char* path, svl_model** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new svl_model{svrgld::load_model(path)};
  });
}

svl_status svl_model_save(const svl_model* model, const char* path, int text) {
  return guarded([&] {
    need(model, "model");
    need(path, "path");
    svrgld::save_model(*model->model, path,
                       text ? svrgld::ModelFormat::Text : svrgld::ModelFormat::Binary);
  });
}

svl_status svl_model_dim(const svl_model* model, size_t* dim) {
  return guarded([&] {
    need(model, "model");
    need(dim, "dim");
    *dim = model->model->dim();
  });
}

svl_status svl_model_info_json(const svl_model* model, char** json) {
  return guarded([&] {
    need(model, "model");
    need(json, "json");
    const auto& m = *model->model;
    nlohmann::json j;
    j["kind"] = svrgld::to_string(m.kind());
    j["d"] = m.dim();
    j["n"] = m.size();
    j["generator"] = std::string("svrgld ") + svl_version();
    auto vec = [](const svrgld::Vector& v) {
      return std::vector<double>(v.data(), v.data() + v.size());
    };
    if (const auto* q = dynamic_cast<const svrgld::QuadraticAlternateModel*>(&m)) {
      j["seed"] = q->seed();
      j["eigenvalues"] = vec(q->eigenvalues());
    } else if (const auto* l = dynamic_cast<const svrgld::LogisticModel*>(&m)) {
      j["seed"] = l->seed();
      j["lambda"] = l->lambda();
      j["true_param"] = vec(l->true_param());
      j["label_mean"] = l->label_mean();
    }
    *json = dup_string(j.dump(2) + "\n");
  });
}

void svl_model_free(svl_model* model) { delete model; }

void svl_run_config_default(svl_run_config* c) {
  if (!c) return;
  const svrgld::RunConfig d;
  *c = svl_run_config{d.eta, d.delta, d.m,    d.batch, d.epochs, d.replicas,
                      1,     d.seed,  0,      0,       0,        0};
}

uint64_t svl_independent_seed(uint64_t seed) { return svrgld::independent_seed(seed); }

svl_status svl_run_svrgld(const svl_model* model, const svl_run_config* config,
                          const double* x0, svl_ensemble** out) {
  return guarded([&] {
    need(model, "model");
    need(out, "out");
    const auto c = to_config(config);
    *out = wrap(svrgld::run_svrgld(*model->model, c.run,
                                   to_vector(x0, model->model->dim())));
  });
}

svl_status svl_run_sdde(const svl_model* model, const svl_run_config* config,
                        const double* x0, svl_ensemble** out) {
  return guarded([&] {
    need(model, "model");
    need(out, "out");
    *out = wrap(svrgld::run_sdde_em(*model->model, to_config(config),
                                    to_vector(x0, model->model->dim())));
  });
}

svl_status svl_run_coupled(const svl_model* model, const svl_run_config* config,
                           const double* x0, svl_ensemble** a,
                           svl_ensemble** b) {
  return guarded([&] {
    need(model, "model");
    need(a, "out");
    need(b, "out");
    auto [x, y] = svrgld::run_coupled(*model->model, to_config(config),
                                      to_vector(x0, model->model->dim()));
    auto first = std::make_unique<svl_ensemble>(svl_ensemble{std::move(x)});
    *b = wrap(std::move(y));
    *a = first.release();
  });
}

void svl_ensemble_free(svl_ensemble* e) { delete e; }

svl_status svl_ensemble_shape(const svl_ensemble* e, size_t* replicas,
                              size_t* epochs, size_t* dim) {
  return guarded([&] {
    need(e, "ensemble");
    if (replicas) *replicas = e->ensemble.replicas();
    if (epochs) *epochs = e->ensemble.epochs();
    if (dim) {
      *dim = e->ensemble.paths.empty()
                 ? 0
                 : static_cast<size_t>(e->ensemble.paths[0].states.cols());
    }
  });
}

svl_status svl_ensemble_states(const svl_ensemble* e, size_t s, double* out) {
  return guarded([&] {
    need(e, "ensemble");
    need(out, "out");
    const svrgld::Matrix m = e->ensemble.states_at(s);
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        out, m.rows(), m.cols()) = m;
  });
}

svl_status svl_ensemble_moment(const svl_ensemble* e, size_t s, int p,
                               double* out) {
  return guarded([&] {
    need(e, "ensemble");
    need(out, "out");
    *out = svrgld::moment(svrgld::EmpiricalMeasure::from_ensemble(e->ensemble, s), p);
  });
}

svl_status svl_ensemble_paths_csv(const svl_ensemble* e, char** csv) {
  return guarded([&] {
    need(e, "ensemble");
    need(csv, "csv");
    *csv = dup_string(svrgld::paths_csv(e->ensemble));
  });
}

svl_status svl_ensemble_moments_csv(const svl_ensemble* e, char** csv) {
  return guarded([&] {
    need(e, "ensemble");
    need(csv, "csv");
    *csv = dup_string(svrgld::moments_csv(e->ensemble));
  });
}

svl_status svl_ensemble_summary_json(const svl_ensemble* e, char** json) {
  return guarded([&] {
    need(e, "ensemble");
    need(json, "json");
    *json = dup_string(svrgld::ensemble_summary_json(e->ensemble));
  });
}

svl_status svl_w1(const svl_ensemble* a, const svl_ensemble* b, size_t s,
                  size_t projections, uint64_t seed, double* mean,
                  double* std_error) {
  return guarded([&] {
    need(a, "ensemble");
    need(b, "ensemble");
    need(mean, "mean");
    const auto ma = svrgld::EmpiricalMeasure::from_ensemble(a->ensemble, s);
    const auto mb = svrgld::EmpiricalMeasure::from_ensemble(b->ensemble, s);
    if (ma.dim() == 1 && mb.dim() == 1) {
      *mean = svrgld::w1_exact_1d(ma, mb, seed);
      if (std_error) *std_error = 0.0;
    } else {
      const auto r = svrgld::sliced_w1(ma, mb, projections, seed);
      *mean = r.mean;
      if (std_error) *std_error = r.std_error;
    }
  });
}

svl_status svl_coupled_distance(const svl_ensemble* a, const svl_ensemble* b,
                                size_t s, int p, double* out) {
  return guarded([&] {
    need(a, "ensemble");
    need(b, "ensemble");
    need(out, "out");
    *out = svrgld::coupled_distance(a->ensemble, b->ensemble, s, p);
  });
}

svl_status svl_w1_table_csv(const svl_w1_row* rows, size_t count, char** csv) {
  return guarded([&] {
    need(csv, "csv");
    if (count) need(rows, "rows");
    std::vector<svrgld::W1Row> v;
    for (size_t i = 0; i < count; ++i) {
      v.push_back({rows[i].eta, rows[i].delta, rows[i].s, rows[i].w1, rows[i].std_error});
    }
    *csv = dup_string(svrgld::w1_table_csv(v));
  });
}

svl_status svl_metrics_csv(const svl_metrics_row* rows, size_t count, char** csv) {
  return guarded([&] {
    need(csv, "csv");
    if (count) need(rows, "rows");
    std::vector<svrgld::MetricsRow> v;
    for (size_t i = 0; i < count; ++i) {
      const auto& r = rows[i];
      v.push_back({r.s, r.eta, r.delta, r.w1_mean, r.w1_stderr, r.m2_a, r.m2_b,
                   r.m4_a, r.m4_b});
    }
    *csv = dup_string(svrgld::metrics_csv(v));
  });
}

void svl_verify_options_default(svl_verify_options* o) {
  if (!o) return;
  const svrgld::VerifyOptions d;
  *o = svl_verify_options{d.eta,
                          d.delta,
                          d.smoothness_trials,
                          d.dissipativity_trials,
                          d.assumption4_trials,
                          d.radius,
                          d.derivative_radius,
                          d.concentration_repetitions,
                          d.concentration_bound,
                          d.seed};
}

svl_status svl_verify(const svl_model* model, const svl_verify_options* options,
                      char** json, int* pass) {
  return guarded([&] {
    need(model, "model");
    need(options, "options");
    need(json, "json");
    svrgld::VerifyOptions o;
    o.eta = options->eta;
    o.delta = options->delta;
    o.smoothness_trials = options->smoothness_trials;
    o.dissipativity_trials = options->dissipativity_trials;
    o.assumption4_trials = options->assumption4_trials;
    o.radius = options->radius;
    o.derivative_radius = options->derivative_radius;
    o.concentration_repetitions = options->concentration_repetitions;
    o.concentration_bound = options->concentration_bound;
    o.seed = options->seed;
    const svrgld::AssumptionReport r = svrgld::run_verification(*model->model, o);
    *json = dup_string(svrgld::to_json(r) + "\n");
    if (pass) *pass = r.pass() ? 1 : 0;
  });
}

svl_status svl_output_open(const char* dir, svl_output** out) {
  return guarded([&] {
    need(dir, "dir");
    need(out, "out");
    *out = new svl_output{svrgld::OutputDir(dir)};
  });
}

svl_status svl_output_write(svl_output* output, const char* name,
                            const char* data, size_t size) {
  return guarded([&] {
    need(output, "output");
    need(name, "name");
    if (size) need(data, "data");
    output->dir.write(name, std::string_view(data ? data : "", size));
  });
}

void svl_output_close(svl_output* output) { delete output; }

uint64_t svl_fnv1a64(const void* data, size_t size) {
  if (!data) return svrgld::fnv1a64({});
  return svrgld::fnv1a64(std::string_view(static_cast<const char*>(data), size));
}

}  // extern "C"
