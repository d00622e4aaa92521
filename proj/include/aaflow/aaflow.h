#ifndef AAFLOW_AAFLOW_H
#define AAFLOW_AAFLOW_H

/* C interface of the almost Anosov flow laboratory.
 *
 * Every call returns an aaf_status. On failure the message of the last error
 * on the calling thread is available from aaf_last_error() until the next call
 * on that thread. Handles are opaque and owned by the caller; release them with
 * the matching *_destroy function. Strings returned through char** outputs are
 * released with aaf_free_string. */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define AAF_API __declspec(dllexport)
#else
#define AAF_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum aaf_status {
  AAF_OK = 0,
  AAF_E_INVALID_ARGUMENT = 1,
  AAF_E_DEGENERATE_DELTA = 2,
  AAF_E_INFINITE_MEASURE = 3,
  AAF_E_DOMAIN = 4,
  AAF_E_SINGULARITY = 5,
  AAF_E_QUADRATURE = 6,
  AAF_E_ROOT_NOT_BRACKETED = 7,
  AAF_E_NO_CONVERGENCE = 8,
  AAF_E_STEP_UNDERFLOW = 9,
  AAF_E_NON_RETURN = 10,
  AAF_E_CONFIG = 11,
  AAF_E_IO = 12,
  AAF_E_NONSUMMABLE = 13,
  AAF_E_INADMISSIBLE = 14,
  AAF_E_NULL_POINTER = 50,
  AAF_E_BUFFER_TOO_SMALL = 51,
  AAF_E_INTERNAL = 99
} aaf_status;

AAF_API const char* aaf_last_error(void);
AAF_API const char* aaf_status_name(aaf_status s);
AAF_API const char* aaf_version(void);
AAF_API void aaf_free_string(char* s);

/* ---- model ------------------------------------------------------------- */

/* theta(x, y) = scale * (px x^2 + qy y^2)^(rho/2) */
typedef struct aaf_homogeneous {
  double rho, scale, px, qy;
} aaf_homogeneous;

/* psi = -scale |q|^rho in the chart; the induced value of one return is
 * offset - psi_0 + flat * tau */
typedef struct aaf_potential {
  double offset, scale, rho, flat;
} aaf_potential;

typedef struct aaf_params {
  double a0, a2, b0, b2;
  double eps; /* chart half-width */
  aaf_homogeneous w;
  aaf_potential psi;
} aaf_params;

typedef struct aaf_derived {
  double delta, u, v;
  double beta0, beta;
  double c0, c2;
  double kappa;
} aaf_derived;

/* P_STABLE, P_BOUNDARY or P_CLT */
AAF_API aaf_status aaf_preset(const char* name, aaf_params* out);
/* Sets one [model] key (a0, a2, b0, b2, eps, w_rho, w_scale, w_px, w_qy,
 * psi_offset, psi_scale, psi_rho, psi_flat) from its text value. */
AAF_API aaf_status aaf_params_set(aaf_params* p, const char* key, const char* value);
AAF_API size_t aaf_model_key_count(void);
AAF_API const char* aaf_model_key(size_t i);
AAF_API aaf_status aaf_params_validate(const aaf_params* p);
AAF_API aaf_status aaf_derive(const aaf_params* p, aaf_derived* out);

/* ---- flow simulation ---------------------------------------------------- */

typedef struct aaf_system aaf_system;

AAF_API aaf_status aaf_system_create(const aaf_params* p, aaf_system** out);
AAF_API void aaf_system_destroy(aaf_system* sys);

typedef struct aaf_return {
  double x0, y0; /* start on the section, torus coordinates */
  double x1, y1; /* end */
  double tau;
  double psi_bar;
  uint64_t r;
  int passed_neutral;
} aaf_return;

/* n returns of the SRB stream after n_burn discarded ones. */
AAF_API aaf_status aaf_sample_returns(const aaf_system* sys, uint64_t seed, uint64_t n_burn,
                                      uint64_t n, aaf_return* out);
/* Columnar little-endian binary file and CSV export of a return array. */
AAF_API aaf_status aaf_write_returns_binary(const char* path, const aaf_return* recs, size_t n);
AAF_API aaf_status aaf_read_returns_binary(const char* path, aaf_return** recs, size_t* n);
AAF_API void aaf_free_returns(aaf_return* recs);
AAF_API aaf_status aaf_write_returns_csv(const char* path, const aaf_return* recs, size_t n);

/* Exact local passage from entry (xi, eta): flow time T and the integral of
 * w along it. */
AAF_API aaf_status aaf_passage(const aaf_system* sys, double xi, double eta, double* T,
                               double* theta);

/* ---- statistics --------------------------------------------------------- */

typedef enum aaf_tail_method { AAF_TAIL_HILL = 0, AAF_TAIL_LOGLOG = 1 } aaf_tail_method;

typedef struct aaf_tail_fit {
  double beta_hat, c_hat, k_frac, stderr_beta;
  double threshold;
  uint64_t k;
} aaf_tail_fit;

AAF_API aaf_status aaf_tail_fit_run(const double* samples, size_t n, aaf_tail_method method,
                                    double k_frac, aaf_tail_fit* out);
/* Survival on a log grid of t; `points` entries of t_out and surv_out are
 * available, *count receives the number written (strictly decreasing surv). */
AAF_API aaf_status aaf_survival_curve(const double* samples, size_t n, size_t points,
                                      double* t_out, double* surv_out, size_t* count);

typedef enum aaf_limit_case {
  AAF_LIMIT_STABLE = 0,
  AAF_LIMIT_NONSTD_CLT = 1,
  AAF_LIMIT_CLT = 2
} aaf_limit_case;

AAF_API aaf_status aaf_limit_case_from_name(const char* name, aaf_limit_case* out);
AAF_API const char* aaf_limit_case_name(aaf_limit_case c);

typedef struct aaf_limit_options {
  aaf_limit_case kind;
  double T_flow;
  uint64_t n_samples;
  uint64_t seed;
  double ks_threshold; /* < 0: 0.02 for clt, 0.05 otherwise */
  uint64_t n_centering;
  uint64_t n_burn;
  uint64_t sample_burn;
  double var_tolerance;
  double alpha_tolerance;
  unsigned threads;
} aaf_limit_options;

AAF_API void aaf_limit_options_default(aaf_limit_options* o);

typedef struct aaf_limit_report {
  aaf_limit_case kind;
  uint64_t sample_count;
  double T_flow, b, c_tail, beta, kappa;
  double psi_star, tau_star, centering;
  double ks_distance, ks_threshold;
  int degenerate, reflected;
  double sigma2, sigma2_gk, sigma2_direct;
  double alpha, scale, location; /* fitted stable law (stable case) */
  double alpha_target;
  int pass;
} aaf_limit_report;

/* normalized may be NULL; otherwise it receives n_samples values. */
AAF_API aaf_status aaf_limit_experiment(const aaf_system* sys, const aaf_limit_options* o,
                                        aaf_limit_report* report, double* normalized);
/* Quantile of the reference law the report was tested against, in the units
 * of the normalized samples. */
AAF_API aaf_status aaf_limit_reference_quantile(const aaf_limit_report* report, double p,
                                                double* out);

/* ---- transfer operator -------------------------------------------------- */

typedef struct aaf_ulam aaf_ulam;

typedef struct aaf_ulam_options {
  int resolution;
  int samples_per_box;
  uint64_t strip_samples;
  uint64_t r_max;
  double level_ratio;
  uint64_t seed;
  unsigned threads;
} aaf_ulam_options;

AAF_API void aaf_ulam_options_default(aaf_ulam_options* o);

typedef struct aaf_ulam_info {
  size_t size, nnz;
  double truncated_mass, leaked_mass, strip_fraction, max_level_osc;
  uint64_t unreachable;
} aaf_ulam_info;

AAF_API aaf_status aaf_ulam_build(const aaf_system* sys, const aaf_ulam_options* o,
                                  aaf_ulam** out);
AAF_API void aaf_ulam_destroy(aaf_ulam* op);
AAF_API aaf_status aaf_ulam_get_info(const aaf_ulam* op, aaf_ulam_info* out);
/* Leading eigenvalue of the operator twisted by exp(-u tau + s psi). */
AAF_API aaf_status aaf_ulam_eigenvalue(const aaf_ulam* op, double u, double s, double* lambda,
                                       double* contraction);
AAF_API aaf_status aaf_ulam_means(const aaf_ulam* op, double* tau_hat, double* psi_hat);

typedef struct aaf_eigen_fit {
  double tau_hat, slope, prefactor, fit_lo, fit_hi, fit_rms;
} aaf_eigen_fit;

/* lambda(u, s) on u_grid (ascending); lambda_out has n entries. */
AAF_API aaf_status aaf_ulam_eigen_curve(const aaf_ulam* op, const double* u_grid, size_t n,
                                        double s, double fit_lo, double fit_hi,
                                        double* lambda_out, aaf_eigen_fit* fit);

typedef struct aaf_relpres_row {
  double s, u0, pbar, ratio;
} aaf_relpres_row;

typedef struct aaf_relpres_summary {
  double tau_hat, psi_hat, phase_slope, phase_prefactor;
  int gap_decreasing;
} aaf_relpres_summary;

AAF_API aaf_status aaf_ulam_relpres(const aaf_ulam* op, const double* s_grid, size_t n,
                                    aaf_relpres_row* rows, aaf_relpres_summary* summary);

/* Monte Carlo Pi(u) = E(1 - exp(-u tau)) over the return stream. */
AAF_API aaf_status aaf_pi_curve(const aaf_system* sys, const double* u_grid, size_t n,
                                uint64_t seed, uint64_t n_burn, uint64_t n_returns,
                                double* out);

/* ---- acceptance checks -------------------------------------------------- */

AAF_API int aaf_check_count(void);
AAF_API const char* aaf_check_name(int id);
/* opaque paper label */
AAF_API const char* aaf_check_anchor(int id);
/* Runs check `id` (1-based). smoke != 0 selects the reduced sizes. *json
 * receives {"id","name","anchor","pass","values":{...},"note"}. */
AAF_API aaf_status aaf_run_check(int id, int smoke, uint64_t seed, unsigned threads, char** json);
AAF_API void aaf_clear_check_cache(void);

#ifdef __cplusplus
}
#endif

#endif
