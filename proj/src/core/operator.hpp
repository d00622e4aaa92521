#pragma once

#include <cstdint>
#include <vector>

#include "flow_sim.hpp"

namespace aaf {

struct UlamOptions {
  int resolution = 128;              // boxes per torus axis
  int samples_per_box = 64;          // uniform points per box for the cat-map part
  std::uint64_t strip_samples = 1 << 20;  // importance samples over the entry strip
  std::uint64_t r_max = 100'000;     // strip returns with r > r_max are truncated
  double level_ratio = 1.15;         // tau levels of the strip transitions
  std::uint64_t seed = 1;
  unsigned threads = 1;
};

// Ulam matrix of the induced map over a regular box grid of the torus,
// restricted to boxes that meet Y. Strip transitions are split by tau level so
// that the per-entry conditional means vary by less than level_ratio.
struct UlamBase {
  int resolution = 0;
  std::vector<std::int32_t> box_of;  // active index -> grid box id
  std::vector<std::int32_t> active;  // grid box id -> active index or -1
  std::vector<double> mass;          // Lebesgue mass of box & Y (estimated)
  // CSR by row (start box)
  std::vector<std::uint64_t> row_ptr;
  std::vector<std::int32_t> col;
  std::vector<double> prob, tau, psi;
  // transposed layout: entries of column j are perm[col_ptr[j] .. col_ptr[j+1])
  std::vector<std::uint64_t> col_ptr;
  std::vector<std::uint64_t> perm;

  std::vector<std::int32_t> row_of_;  // row of each entry, for the left product

  double truncated_mass = 0;  // strip mass with r > r_max, as a fraction of Y
  double leaked_mass = 0;     // mass sent to boxes without samples, fraction of Y
  double strip_fraction = 0;  // strip share of Y
  double max_level_osc = 0;   // largest relative tau spread inside one strip entry
  std::uint64_t unreachable = 0;  // active boxes without incoming transitions
  std::uint64_t strip_samples_used = 0;
  unsigned threads = 1;  // default worker count for operators twisted from this base

  std::size_t size() const { return box_of.size(); }
  std::size_t nnz() const { return col.size(); }
  int box_index(const SectionPoint& q) const;  // active index or -1
};

UlamBase build_ulam(const HybridSystem& sys, const UlamOptions& opt);

// Entry weights base.prob * exp(-u tau + s psi).
struct TwistedOperator {
  const UlamBase* base = nullptr;
  double u = 0, s = 0;
  std::vector<double> w;
  unsigned threads = 1;  // mat-vec row blocks; results do not depend on it
};

TwistedOperator twist(const UlamBase& base, double u, double s, bool log_domain = false,
                      unsigned threads = 0);  // 0: base.threads

struct EigenResult {
  double lambda = 0;
  std::vector<double> right_vec;  // normalized to unit mean
  std::vector<double> left_vec;   // probability vector (only when requested)
  double lambda_left = 0;
  double residual = 0;
  std::uint64_t iterations = 0;
  double contraction = 0;  // estimated |lambda_2 / lambda|
};

// Power iteration. `start` (same size, positive) warm-starts the right vector.
EigenResult leading_eigen(const TwistedOperator& op, double tol = 1e-13, bool with_left = false,
                          const std::vector<double>* start = nullptr,
                          std::uint64_t max_iter = 100'000);

// Row-vector products for the left iteration, exposed for tests.
void apply_right(const TwistedOperator& op, const std::vector<double>& v, std::vector<double>& out);
void apply_left(const TwistedOperator& op, const std::vector<double>& v, std::vector<double>& out);

// Stationary quantities of the unweighted chain: tau_hat = -dlambda/du(0) and
// psi_hat = dlog lambda/ds(0), both exact for the Ulam matrix.
struct UlamMeans {
  double tau_hat, psi_hat;
  std::vector<double> stationary;
};
UlamMeans ulam_means(const UlamBase& base, double tol = 1e-14);

struct EigenCurvePoint {
  double u, s, lambda, one_minus_lambda;
  double pi_u = 0;  // Monte Carlo Pi(u), filled by the caller when available
};

struct EigenCurveFit {
  std::vector<EigenCurvePoint> points;
  double tau_hat = 0;
  // power fit |-log lambda(u) - tau_hat u| ~ A u^slope over [fit_lo, fit_hi]
  double slope = 0, prefactor = 0, fit_lo = 0, fit_hi = 0, fit_rms = 0;
};

EigenCurveFit eigen_curve_u(const UlamBase& base, const std::vector<double>& u_grid, double s,
                            double fit_lo, double fit_hi);

double pressure_induced(const UlamBase& base, double s);
// u0 with lambda(u0, s) = 1.
double pressure_flow(const UlamBase& base, double s);

struct RelPresRow {
  double s, u0, pbar, ratio;
};
struct RelPresReport {
  double tau_hat = 0, psi_hat = 0;
  std::vector<RelPresRow> rows;  // s ascending
  // power fit |pbar - psi_hat s| ~ A s^slope over the grid
  double phase_slope = 0, phase_prefactor = 0;
  bool gap_decreasing = false;
};

RelPresReport verify_relpres(const UlamBase& base, const std::vector<double>& s_grid);

// Pi(u) = mean(1 - exp(-u tau)) over an SRB return stream.
std::vector<double> pi_curve(const HybridSystem& sys, const std::vector<double>& u_grid,
                             std::uint64_t seed, std::uint64_t n_burn, std::uint64_t n);

std::vector<double> log_grid(double lo, double hi, std::size_t points);

}  // namespace aaf
