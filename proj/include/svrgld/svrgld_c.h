#ifndef SVRGLD_C_H
#define SVRGLD_C_H

#include <stddef.h>
#include <stdint.h>

#if defined(SVL_BUILDING_LIBRARY)
#define SVL_API __attribute__((visibility("default")))
#else
#define SVL_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum svl_status {
  SVL_OK = 0,
  SVL_INVALID_INPUT = 1,
  SVL_NOT_PSD = 2,
  SVL_NO_CONVERGENCE = 3,
  SVL_DIVERGED = 4,
  SVL_INVALID_CONFIG = 5,
  SVL_IO = 6,
  SVL_INTERNAL = 100
} svl_status;

typedef struct svl_model svl_model;
typedef struct svl_ensemble svl_ensemble;
typedef struct svl_output svl_output;

/* Message of the last failing call on this thread; "" if none. */
SVL_API const char* svl_last_error(void);
SVL_API const char* svl_status_name(svl_status status);
SVL_API const char* svl_version(void);

/* Frees strings returned through char** out-parameters. */
SVL_API void svl_string_free(char* s);

/* Models */
SVL_API svl_status svl_model_generate_quadratic(size_t d, size_t n,
                                                const double* eigenvalues,
                                                uint64_t seed, svl_model** out);
SVL_API svl_status svl_model_generate_logistic(size_t d, size_t n,
                                               const double* true_param,
                                               double lambda, uint64_t seed,
                                               svl_model** out);
SVL_API svl_status svl_model_load(const char* path, svl_model** out);
/* text != 0 selects the human-readable format. */
SVL_API svl_status svl_model_save(const svl_model* model, const char* path,
                                  int text);
SVL_API svl_status svl_model_dim(const svl_model* model, size_t* dim);
/* JSON: kind, d, n, seed and model-specific fields. */
SVL_API svl_status svl_model_info_json(const svl_model* model, char** json);
SVL_API void svl_model_free(svl_model* model);

/* Runs */
typedef struct svl_run_config {
  double eta;
  double delta;
  size_t m;
  size_t batch;
  size_t epochs;
  size_t replicas;
  size_t substeps;
  uint64_t seed;
  int record_inner;
  int without_replacement;
  int use_q_cache;
  unsigned threads;
} svl_run_config;

SVL_API void svl_run_config_default(svl_run_config* config);
SVL_API uint64_t svl_independent_seed(uint64_t seed);

/* x0 has model dimension entries. */
SVL_API svl_status svl_run_svrgld(const svl_model* model,
                                  const svl_run_config* config,
                                  const double* x0, svl_ensemble** out);
SVL_API svl_status svl_run_sdde(const svl_model* model,
                                const svl_run_config* config, const double* x0,
                                svl_ensemble** out);
/* Both processes on shared Gaussian increments; needs substeps == 1. */
SVL_API svl_status svl_run_coupled(const svl_model* model,
                                   const svl_run_config* config,
                                   const double* x0, svl_ensemble** svrgld,
                                   svl_ensemble** sdde);
SVL_API void svl_ensemble_free(svl_ensemble* ensemble);

SVL_API svl_status svl_ensemble_shape(const svl_ensemble* ensemble,
                                      size_t* replicas, size_t* epochs,
                                      size_t* dim);
/* Writes replicas x dim values, row-major, for epoch s. */
SVL_API svl_status svl_ensemble_states(const svl_ensemble* ensemble, size_t s,
                                       double* out);
SVL_API svl_status svl_ensemble_moment(const svl_ensemble* ensemble, size_t s,
                                       int p, double* out);
SVL_API svl_status svl_ensemble_paths_csv(const svl_ensemble* ensemble,
                                          char** csv);
SVL_API svl_status svl_ensemble_moments_csv(const svl_ensemble* ensemble,
                                            char** csv);
SVL_API svl_status svl_ensemble_summary_json(const svl_ensemble* ensemble,
                                             char** json);

/* Metrics. Exact 1-D W1 when dim == 1 (std_error = 0), sliced W1 otherwise. */
SVL_API svl_status svl_w1(const svl_ensemble* a, const svl_ensemble* b,
                          size_t s, size_t projections, uint64_t seed,
                          double* mean, double* std_error);
SVL_API svl_status svl_coupled_distance(const svl_ensemble* a,
                                        const svl_ensemble* b, size_t s, int p,
                                        double* out);

typedef struct svl_w1_row {
  double eta;
  double delta;
  size_t s;
  double w1;
  double std_error;
} svl_w1_row;

SVL_API svl_status svl_w1_table_csv(const svl_w1_row* rows, size_t count,
                                    char** csv);

typedef struct svl_metrics_row {
  size_t s;
  double eta;
  double delta;
  double w1_mean;
  double w1_stderr;
  double m2_a, m2_b, m4_a, m4_b;
} svl_metrics_row;

SVL_API svl_status svl_metrics_csv(const svl_metrics_row* rows, size_t count,
                                   char** csv);

/* Verification */
typedef struct svl_verify_options {
  double eta;
  double delta;
  size_t smoothness_trials;
  size_t dissipativity_trials;
  size_t assumption4_trials;
  double radius;
  double derivative_radius;
  size_t concentration_repetitions;
  double concentration_bound;
  uint64_t seed;
} svl_verify_options;

SVL_API void svl_verify_options_default(svl_verify_options* options);
/* *pass is 1 when every pass flag in the report holds. */
SVL_API svl_status svl_verify(const svl_model* model,
                              const svl_verify_options* options, char** json,
                              int* pass);

/* Append-only output directories */
SVL_API svl_status svl_output_open(const char* dir, svl_output** out);
SVL_API svl_status svl_output_write(svl_output* output, const char* name,
                                    const char* data, size_t size);
SVL_API void svl_output_close(svl_output* output);

SVL_API uint64_t svl_fnv1a64(const void* data, size_t size);

#ifdef __cplusplus
}
#endif

#endif
