#include "aaflow/aaflow.h"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <fstream>
#include <memory>
#include <new>
#include <string>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "checks.hpp"
#include "error.hpp"
#include "flow_sim.hpp"
#include "local_dynamics.hpp"
#include "model.hpp"
#include "operator.hpp"
#include "stable.hpp"
#include "statistics.hpp"

struct aaf_system {
  std::unique_ptr<aaf::HybridSystem> sys;
};

struct aaf_ulam {
  aaf::UlamBase base;
};

namespace {

thread_local std::string g_last_error;

aaf_status set_error(aaf_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

aaf_status from_code(aaf::ErrorCode c) {
  // the core enum mirrors the C one value for value
  return static_cast<aaf_status>(static_cast<int>(c));
}

// Runs f, mapping exceptions onto status codes.
template <class F>
aaf_status guarded(F&& f) {
  g_last_error.clear();
  try {
    f();
    return AAF_OK;
  } catch (const aaf::Error& e) {
    return set_error(from_code(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return set_error(AAF_E_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return set_error(AAF_E_INTERNAL, e.what());
  } catch (...) {
    return set_error(AAF_E_INTERNAL, "unknown failure");
  }
}

#define AAF_REQUIRE(ptr)                                                     \
  do {                                                                       \
    if (!(ptr)) return set_error(AAF_E_NULL_POINTER, "null argument: " #ptr); \
  } while (0)

aaf::FlowParams to_core(const aaf_params& p) {
  aaf::FlowParams q;
  q.a0 = p.a0;
  q.a2 = p.a2;
  q.b0 = p.b0;
  q.b2 = p.b2;
  q.eps = p.eps;
  q.w = {p.w.rho, p.w.scale, p.w.px, p.w.qy};
  q.psi.offset = p.psi.offset;
  q.psi.scale = p.psi.scale;
  q.psi.rho = p.psi.rho;
  q.psi.flat = p.psi.flat;
  return q;
}

aaf_params from_core(const aaf::FlowParams& q) {
  aaf_params p;
  p.a0 = q.a0;
  p.a2 = q.a2;
  p.b0 = q.b0;
  p.b2 = q.b2;
  p.eps = q.eps;
  p.w = {q.w.rho, q.w.scale, q.w.px, q.w.qy};
  p.psi = {q.psi.offset, q.psi.scale, q.psi.rho, q.psi.flat};
  return p;
}

aaf_return from_core(const aaf::ReturnRecord& r) {
  return {r.start.x, r.start.y, r.end.x, r.end.y, r.tau, r.psi_bar, r.r, r.passed_neutral ? 1 : 0};
}

aaf::ReturnRecord to_core(const aaf_return& r) {
  aaf::ReturnRecord q;
  q.start = {r.x0, r.y0};
  q.end = {r.x1, r.y1};
  q.tau = r.tau;
  q.psi_bar = r.psi_bar;
  q.r = r.r;
  q.passed_neutral = r.passed_neutral != 0;
  return q;
}

aaf::LimitCase to_core(aaf_limit_case c) {
  switch (c) {
    case AAF_LIMIT_STABLE: return aaf::LimitCase::stable;
    case AAF_LIMIT_NONSTD_CLT: return aaf::LimitCase::nonstd_clt;
    case AAF_LIMIT_CLT: return aaf::LimitCase::clt;
  }
  aaf::fail(aaf::ErrorCode::invalid_argument, "unknown limit case");
}

aaf_limit_case from_core(aaf::LimitCase c) {
  switch (c) {
    case aaf::LimitCase::stable: return AAF_LIMIT_STABLE;
    case aaf::LimitCase::nonstd_clt: return AAF_LIMIT_NONSTD_CLT;
    case aaf::LimitCase::clt: return AAF_LIMIT_CLT;
  }
  return AAF_LIMIT_CLT;
}

aaf::UlamOptions to_core(const aaf_ulam_options& o) {
  aaf::UlamOptions u;
  u.resolution = o.resolution;
  u.samples_per_box = o.samples_per_box;
  u.strip_samples = o.strip_samples;
  u.r_max = o.r_max;
  u.level_ratio = o.level_ratio;
  u.seed = o.seed;
  u.threads = o.threads;
  return u;
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

}  // namespace

extern "C" {

const char* aaf_last_error(void) { return g_last_error.c_str(); }

const char* aaf_status_name(aaf_status s) {
  switch (s) {
    case AAF_OK: return "ok";
    case AAF_E_INVALID_ARGUMENT: return "invalid_argument";
    case AAF_E_DEGENERATE_DELTA: return "degenerate_delta";
    case AAF_E_INFINITE_MEASURE: return "infinite_measure";
    case AAF_E_DOMAIN: return "domain";
    case AAF_E_SINGULARITY: return "singularity";
    case AAF_E_QUADRATURE: return "quadrature";
    case AAF_E_ROOT_NOT_BRACKETED: return "root_not_bracketed";
    case AAF_E_NO_CONVERGENCE: return "no_convergence";
    case AAF_E_STEP_UNDERFLOW: return "step_underflow";
    case AAF_E_NON_RETURN: return "non_return";
    case AAF_E_CONFIG: return "config";
    case AAF_E_IO: return "io";
    case AAF_E_NONSUMMABLE: return "nonsummable";
    case AAF_E_INADMISSIBLE: return "inadmissible";
    case AAF_E_NULL_POINTER: return "null_pointer";
    case AAF_E_BUFFER_TOO_SMALL: return "buffer_too_small";
    case AAF_E_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* aaf_version(void) { return AAFLOW_VERSION; }

void aaf_free_string(char* s) { std::free(s); }

// ---- model -----------------------------------------------------------------

aaf_status aaf_preset(const char* name, aaf_params* out) {
  AAF_REQUIRE(name);
  AAF_REQUIRE(out);
  return guarded([&] { *out = from_core(aaf::preset(name)); });
}

aaf_status aaf_params_set(aaf_params* p, const char* key, const char* value) {
  AAF_REQUIRE(p);
  AAF_REQUIRE(key);
  AAF_REQUIRE(value);
  return guarded([&] {
    if (std::string(key) == "preset")
      aaf::fail(aaf::ErrorCode::config, "use aaf_preset for model.preset");
    aaf::KeyValues kv = aaf::params_to_keys(to_core(*p));
    if (kv.find(key) == kv.end()) aaf::fail(aaf::ErrorCode::config, std::string("unknown key model.") + key);
    kv[key] = value;
    *p = from_core(aaf::params_from_keys(kv));
  });
}

size_t aaf_model_key_count(void) { return aaf::model_keys().size(); }

const char* aaf_model_key(size_t i) {
  // model_keys() holds views of string literals, so data() is terminated
  return i < aaf::model_keys().size() ? aaf::model_keys()[i].data() : nullptr;
}

aaf_status aaf_params_validate(const aaf_params* p) {
  AAF_REQUIRE(p);
  return guarded([&] { aaf::validate_params(to_core(*p)); });
}

aaf_status aaf_derive(const aaf_params* p, aaf_derived* out) {
  AAF_REQUIRE(p);
  AAF_REQUIRE(out);
  return guarded([&] {
    const aaf::DerivedConstants d = aaf::derive_constants(to_core(*p));
    *out = {d.delta, d.u, d.v, d.beta0, d.beta, d.c0, d.c2, d.kappa};
  });
}

// ---- flow simulation -------------------------------------------------------

aaf_status aaf_system_create(const aaf_params* p, aaf_system** out) {
  AAF_REQUIRE(p);
  AAF_REQUIRE(out);
  *out = nullptr;
  return guarded([&] {
    auto h = std::make_unique<aaf_system>();
    h->sys = std::make_unique<aaf::HybridSystem>(to_core(*p));
    *out = h.release();
  });
}

void aaf_system_destroy(aaf_system* sys) { delete sys; }

aaf_status aaf_sample_returns(const aaf_system* sys, uint64_t seed, uint64_t n_burn, uint64_t n,
                              aaf_return* out) {
  AAF_REQUIRE(sys);
  AAF_REQUIRE(out);
  return guarded([&] {
    std::uint64_t i = 0;
    aaf::srb_stream(*sys->sys, seed, n_burn, n,
                    [&](const aaf::ReturnRecord& r) { out[i++] = from_core(r); });
  });
}

aaf_status aaf_write_returns_binary(const char* path, const aaf_return* recs, size_t n) {
  AAF_REQUIRE(path);
  if (n > 0) AAF_REQUIRE(recs);
  return guarded([&] {
    std::vector<aaf::ReturnRecord> v;
    v.reserve(n);
    for (size_t i = 0; i < n; ++i) v.push_back(to_core(recs[i]));
    aaf::write_returns_binary(path, v);
  });
}

aaf_status aaf_read_returns_binary(const char* path, aaf_return** recs, size_t* n) {
  AAF_REQUIRE(path);
  AAF_REQUIRE(recs);
  AAF_REQUIRE(n);
  *recs = nullptr;
  *n = 0;
  return guarded([&] {
    const std::vector<aaf::ReturnRecord> v = aaf::read_returns_binary(path);
    auto* out = static_cast<aaf_return*>(std::malloc(std::max<size_t>(1, v.size()) * sizeof(aaf_return)));
    if (!out) throw std::bad_alloc();
    for (size_t i = 0; i < v.size(); ++i) out[i] = from_core(v[i]);
    *recs = out;
    *n = v.size();
  });
}

void aaf_free_returns(aaf_return* recs) { std::free(recs); }

aaf_status aaf_write_returns_csv(const char* path, const aaf_return* recs, size_t n) {
  AAF_REQUIRE(path);
  if (n > 0) AAF_REQUIRE(recs);
  return guarded([&] {
    std::vector<aaf::ReturnRecord> v;
    v.reserve(n);
    for (size_t i = 0; i < n; ++i) v.push_back(to_core(recs[i]));
    std::ofstream os(path, std::ios::binary);
    if (!os) aaf::fail(aaf::ErrorCode::io, std::string("cannot open ") + path);
    aaf::write_returns_csv(os, v);
    if (!os) aaf::fail(aaf::ErrorCode::io, std::string("write failed: ") + path);
  });
}

aaf_status aaf_passage(const aaf_system* sys, double xi, double eta, double* T, double* theta) {
  AAF_REQUIRE(sys);
  AAF_REQUIRE(T);
  return guarded([&] {
    const aaf::PassageResult r = aaf::passage_time(sys->sys->local_model(), xi, eta);
    *T = r.T;
    if (theta) *theta = r.theta;
  });
}

// ---- statistics ------------------------------------------------------------

aaf_status aaf_tail_fit_run(const double* samples, size_t n, aaf_tail_method method, double k_frac,
                            aaf_tail_fit* out) {
  AAF_REQUIRE(samples);
  AAF_REQUIRE(out);
  return guarded([&] {
    const aaf::TailFit f = aaf::tail_fit(std::vector<double>(samples, samples + n),
                                         method == AAF_TAIL_HILL ? aaf::TailMethod::hill
                                                                 : aaf::TailMethod::loglog,
                                         k_frac);
    *out = {f.beta_hat, f.c_hat, f.k_frac, f.stderr_, f.threshold, f.k};
  });
}

aaf_status aaf_survival_curve(const double* samples, size_t n, size_t points, double* t_out,
                              double* surv_out, size_t* count) {
  AAF_REQUIRE(samples);
  AAF_REQUIRE(t_out);
  AAF_REQUIRE(surv_out);
  AAF_REQUIRE(count);
  return guarded([&] {
    const auto curve = aaf::survival_curve(std::vector<double>(samples, samples + n), points);
    for (size_t i = 0; i < curve.size(); ++i) {
      t_out[i] = curve[i].first;
      surv_out[i] = curve[i].second;
    }
    *count = curve.size();
  });
}

aaf_status aaf_limit_case_from_name(const char* name, aaf_limit_case* out) {
  AAF_REQUIRE(name);
  AAF_REQUIRE(out);
  return guarded([&] { *out = from_core(aaf::limit_case_from_name(name)); });
}

const char* aaf_limit_case_name(aaf_limit_case c) {
  switch (c) {
    case AAF_LIMIT_STABLE: return "stable";
    case AAF_LIMIT_NONSTD_CLT: return "nonstd_clt";
    case AAF_LIMIT_CLT: return "clt";
  }
  return "?";
}

void aaf_limit_options_default(aaf_limit_options* o) {
  if (!o) return;
  const aaf::LimitOptions d;
  o->kind = from_core(d.kind);
  o->T_flow = d.T_flow;
  o->n_samples = d.n_samples;
  o->seed = d.seed;
  o->ks_threshold = d.ks_threshold;
  o->n_centering = d.n_centering;
  o->n_burn = d.n_burn;
  o->sample_burn = d.sample_burn;
  o->var_tolerance = d.var_tolerance;
  o->alpha_tolerance = d.alpha_tolerance;
  o->threads = d.threads;
}

aaf_status aaf_limit_experiment(const aaf_system* sys, const aaf_limit_options* o,
                                aaf_limit_report* report, double* normalized) {
  AAF_REQUIRE(sys);
  AAF_REQUIRE(o);
  AAF_REQUIRE(report);
  return guarded([&] {
    aaf::LimitOptions lo;
    lo.kind = to_core(o->kind);
    lo.T_flow = o->T_flow;
    lo.n_samples = o->n_samples;
    lo.seed = o->seed;
    lo.ks_threshold = o->ks_threshold;
    lo.n_centering = o->n_centering;
    lo.n_burn = o->n_burn;
    lo.sample_burn = o->sample_burn;
    lo.var_tolerance = o->var_tolerance;
    lo.alpha_tolerance = o->alpha_tolerance;
    lo.threads = o->threads;
    const aaf::LimitReport r = aaf::limit_experiment(*sys->sys, lo);
    aaf_limit_report& out = *report;
    out.kind = from_core(r.kind);
    out.sample_count = r.sample_count;
    out.T_flow = r.T_flow;
    out.b = r.b;
    out.c_tail = r.c_tail;
    out.beta = r.beta;
    out.kappa = r.kappa;
    out.psi_star = r.psi_star;
    out.tau_star = r.tau_star;
    out.centering = r.centering;
    out.ks_distance = r.ks_distance;
    out.ks_threshold = r.ks_threshold;
    out.degenerate = r.degenerate ? 1 : 0;
    out.reflected = r.reflected ? 1 : 0;
    out.sigma2 = r.sigma2;
    out.sigma2_gk = r.sigma2_gk;
    out.sigma2_direct = r.sigma2_direct;
    out.alpha = r.fitted.alpha;
    out.scale = r.fitted.scale;
    out.location = r.fitted.location;
    out.alpha_target = r.alpha_target;
    out.pass = r.pass ? 1 : 0;
    if (normalized) std::copy(r.normalized.begin(), r.normalized.end(), normalized);
  });
}

aaf_status aaf_limit_reference_quantile(const aaf_limit_report* report, double p, double* out) {
  AAF_REQUIRE(report);
  AAF_REQUIRE(out);
  return guarded([&] {
    if (!(p > 0.0 && p < 1.0)) aaf::fail(aaf::ErrorCode::invalid_argument, "quantile level must lie in (0, 1)");
    if (report->degenerate) aaf::fail(aaf::ErrorCode::invalid_argument, "degenerate limit sample");
    if (report->kind == AAF_LIMIT_STABLE) {
      aaf::StableSpec s;
      s.alpha = report->alpha;
      s.scale = report->scale;
      s.location = report->location;
      // the fit was made to the negated samples
      *out = report->reflected ? -aaf::stable_quantile(s, 1.0 - p) : aaf::stable_quantile(s, p);
    } else {
      *out = boost::math::quantile(boost::math::normal(0.0, std::sqrt(report->sigma2)), p);
    }
  });
}

// ---- transfer operator -----------------------------------------------------

void aaf_ulam_options_default(aaf_ulam_options* o) {
  if (!o) return;
  const aaf::UlamOptions d;
  o->resolution = d.resolution;
  o->samples_per_box = d.samples_per_box;
  o->strip_samples = d.strip_samples;
  o->r_max = d.r_max;
  o->level_ratio = d.level_ratio;
  o->seed = d.seed;
  o->threads = d.threads;
}

aaf_status aaf_ulam_build(const aaf_system* sys, const aaf_ulam_options* o, aaf_ulam** out) {
  AAF_REQUIRE(sys);
  AAF_REQUIRE(o);
  AAF_REQUIRE(out);
  *out = nullptr;
  return guarded([&] {
    auto h = std::make_unique<aaf_ulam>();
    h->base = aaf::build_ulam(*sys->sys, to_core(*o));
    *out = h.release();
  });
}

void aaf_ulam_destroy(aaf_ulam* op) { delete op; }

aaf_status aaf_ulam_get_info(const aaf_ulam* op, aaf_ulam_info* out) {
  AAF_REQUIRE(op);
  AAF_REQUIRE(out);
  const aaf::UlamBase& b = op->base;
  *out = {b.size(), b.nnz(), b.truncated_mass, b.leaked_mass, b.strip_fraction, b.max_level_osc,
          b.unreachable};
  return AAF_OK;
}

aaf_status aaf_ulam_eigenvalue(const aaf_ulam* op, double u, double s, double* lambda,
                               double* contraction) {
  AAF_REQUIRE(op);
  AAF_REQUIRE(lambda);
  return guarded([&] {
    const aaf::EigenResult e = aaf::leading_eigen(aaf::twist(op->base, u, s), 1e-14);
    *lambda = e.lambda;
    if (contraction) *contraction = e.contraction;
  });
}

aaf_status aaf_ulam_means(const aaf_ulam* op, double* tau_hat, double* psi_hat) {
  AAF_REQUIRE(op);
  return guarded([&] {
    const aaf::UlamMeans m = aaf::ulam_means(op->base);
    if (tau_hat) *tau_hat = m.tau_hat;
    if (psi_hat) *psi_hat = m.psi_hat;
  });
}

aaf_status aaf_ulam_eigen_curve(const aaf_ulam* op, const double* u_grid, size_t n, double s,
                                double fit_lo, double fit_hi, double* lambda_out,
                                aaf_eigen_fit* fit) {
  AAF_REQUIRE(op);
  AAF_REQUIRE(u_grid);
  AAF_REQUIRE(lambda_out);
  return guarded([&] {
    const aaf::EigenCurveFit f =
        aaf::eigen_curve_u(op->base, std::vector<double>(u_grid, u_grid + n), s, fit_lo, fit_hi);
    for (size_t i = 0; i < f.points.size(); ++i) lambda_out[i] = f.points[i].lambda;
    if (fit) *fit = {f.tau_hat, f.slope, f.prefactor, f.fit_lo, f.fit_hi, f.fit_rms};
  });
}

aaf_status aaf_ulam_relpres(const aaf_ulam* op, const double* s_grid, size_t n,
                            aaf_relpres_row* rows, aaf_relpres_summary* summary) {
  AAF_REQUIRE(op);
  AAF_REQUIRE(s_grid);
  AAF_REQUIRE(rows);
  return guarded([&] {
    const aaf::RelPresReport r = aaf::verify_relpres(op->base, std::vector<double>(s_grid, s_grid + n));
    for (size_t i = 0; i < r.rows.size(); ++i)
      rows[i] = {r.rows[i].s, r.rows[i].u0, r.rows[i].pbar, r.rows[i].ratio};
    if (summary)
      *summary = {r.tau_hat, r.psi_hat, r.phase_slope, r.phase_prefactor, r.gap_decreasing ? 1 : 0};
  });
}

aaf_status aaf_pi_curve(const aaf_system* sys, const double* u_grid, size_t n, uint64_t seed,
                        uint64_t n_burn, uint64_t n_returns, double* out) {
  AAF_REQUIRE(sys);
  AAF_REQUIRE(u_grid);
  AAF_REQUIRE(out);
  return guarded([&] {
    const auto pi = aaf::pi_curve(*sys->sys, std::vector<double>(u_grid, u_grid + n), seed, n_burn,
                                  n_returns);
    std::copy(pi.begin(), pi.end(), out);
  });
}

// ---- acceptance checks -----------------------------------------------------

int aaf_check_count(void) { return aaf::kCheckCount; }

const char* aaf_check_name(int id) {
  return id >= 1 && id <= aaf::kCheckCount ? aaf::check_name(id) : nullptr;
}

const char* aaf_check_anchor(int id) {
  return id >= 1 && id <= aaf::kCheckCount ? aaf::check_anchor(id) : nullptr;
}

aaf_status aaf_run_check(int id, int smoke, uint64_t seed, unsigned threads, char** json) {
  AAF_REQUIRE(json);
  *json = nullptr;
  if (id < 1 || id > aaf::kCheckCount)
    return set_error(AAF_E_INVALID_ARGUMENT, "check id must lie in 1.." + std::to_string(aaf::kCheckCount));
  return guarded([&] {
    aaf::CheckOptions o;
    o.scale = smoke ? aaf::CheckScale::smoke : aaf::CheckScale::full;
    o.seed = seed;
    o.threads = threads == 0 ? 1 : threads;
    *json = dup_string(aaf::check_to_json(aaf::run_check(id, o)));
  });
}

void aaf_clear_check_cache(void) { aaf::clear_check_cache(); }

}  // extern "C"
