#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flow_sim.hpp"
#include "stable.hpp"

namespace aaf {

enum class TailMethod { hill, loglog };

struct TailFit {
  double beta_hat = 0;
  double c_hat = 0;      // P(X > t) ~ c_hat t^-beta_hat
  double k_frac = 0;     // fraction of the sample above the threshold
  double stderr_ = 0;
  TailMethod method = TailMethod::hill;
  std::size_t k = 0;
  double threshold = 0;  // lower end of the fitted range
  double t_top = 0;      // upper end (loglog only)
};

// Hill estimator on the top k = k_frac * n order statistics, or least-squares
// slope of log survival against log t over the top two decades of the empirical
// survival, from k/100 to k exceedances (needs k >= 1000).
TailFit tail_fit(std::vector<double> samples, TailMethod method, double k_frac);

// Survival function on a log-spaced grid of t: (t, fraction of samples > t).
// Grid points that do not lower the survival are dropped.
std::vector<std::pair<double, double>> survival_curve(std::vector<double> samples,
                                                      std::size_t points);

enum class LimitCase { stable, nonstd_clt, clt };
const char* limit_case_name(LimitCase c);
LimitCase limit_case_from_name(const std::string& name);

// b(T) of the limit theorem: T^{kappa/beta}/c (stable, kappa in (beta/2, beta)),
// sqrt(T log T / c) (nonstandard CLT, kappa = beta/2), sqrt(T) (CLT, kappa < beta/2).
double normalizer_b(double T, LimitCase kind, double beta, double kappa, double c);
// Limit case implied by (beta, kappa).
LimitCase admissible_case(double beta, double kappa);

struct VarianceEstimate {
  double sigma2 = 0;      // flow-clock variance: Green-Kubo sum / tau_star
  double sigma2_map = 0;  // Green-Kubo sum for the induced series
  double gamma0 = 0;
  double tau_int = 0;     // integrated autocorrelation time 1/2 + sum rho_j
  std::size_t window = 0;
};

// Green-Kubo estimate Var + 2 sum_j cov(j), truncated by Geyer's initial
// monotone sequence (pair sums cov(2k) + cov(2k+1) while positive). This copes
// with the sign-alternating correlations of the return series. The series mean
// is removed first. Throws nonsummable when the pairs stay positive up to lag
// min(n/50, 2000) or the two halves disagree by more than a factor of two.
VarianceEstimate variance_estimate(const std::vector<double>& series, double tau_star);

// Streaming lagged second moments of a pair (a_i, b_i), so that the
// autocovariance of x_i = a_i - m b_i can be formed for any m after the pass.
// Folds over disjoint stretches of a stream merge by addition (products across
// the seam are dropped).
class LaggedMoments {
public:
  explicit LaggedMoments(std::size_t max_lag);
  void add(double a, double b);
  void merge(const LaggedMoments& o);
  std::uint64_t count() const { return n_; }
  std::size_t max_lag() const { return L_; }
  // autocovariance of a - m b at lags 0..max_lag
  std::vector<double> autocov(double m) const;

private:
  void flush();
  std::size_t L_;
  std::uint64_t n_ = 0;
  std::vector<double> ra_, rb_;  // ring buffers of the last L_ + 1 values
  std::vector<double> part_;     // per-chunk partial sums, flushed into tot_
  std::vector<long double> tot_;
  std::uint64_t in_chunk_ = 0;
};

// Green-Kubo estimate over a stream: x = a - m b, halves given as two folds.
VarianceEstimate variance_estimate(const LaggedMoments& first, const LaggedMoments& second,
                                   double m, double tau_star);

struct LimitOptions {
  LimitCase kind = LimitCase::clt;
  double T_flow = 1e4;
  std::uint64_t n_samples = 10000;
  std::uint64_t seed = 1;
  double ks_threshold = -1;              // < 0: 0.02 (clt) or 0.05
  std::uint64_t n_centering = 100'000'000;  // returns used for psi*, tau* and Green-Kubo
  std::uint64_t n_burn = 10'000;
  std::uint64_t sample_burn = 1000;        // returns discarded before each sample
  double phase_window = -1;                // < 0: T_flow
  double var_tolerance = 0.10;             // clt: Green-Kubo vs direct variance
  double alpha_tolerance = 0.10;           // stable: fitted index vs beta/kappa
  unsigned threads = 1;
};

struct LimitReport {
  LimitCase kind = LimitCase::clt;
  std::uint64_t sample_count = 0;
  double T_flow = 0;
  double b = 0;              // normalizer b(T)
  double c_tail = 0;         // tail constant of psi_0 used in b
  double beta = 0, kappa = 0;
  double psi_star = 0, tau_star = 0;
  double centering = 0;      // psi_star / tau_star, the flow mean of psi
  double ks_distance = 1;
  double ks_threshold = 0;
  bool degenerate = false;
  bool reflected = false;    // stable case: samples negated to skew right
  // Gaussian cases
  double sigma2 = 0;         // variance of the reference normal law
  double sigma2_gk = 0;
  double sigma2_direct = 0;
  // stable case
  StableSpec fitted{};
  double alpha_target = 0;
  bool pass = false;
  std::vector<double> normalized;  // (psi_T - centering T)/b, by sample index
};

LimitReport limit_experiment(const HybridSystem& sys, const LimitOptions& opt);

// Independent estimates of psi* and tau* (means over the SRB return stream).
struct Centering {
  double psi_star, tau_star;
  std::uint64_t n;
};
Centering estimate_centering(const HybridSystem& sys, std::uint64_t seed, std::uint64_t n_burn,
                             std::uint64_t n);

// psi_T for one flow sample started near the flow-invariant measure.
double flow_sample(const HybridSystem& sys, std::uint64_t seed, std::uint64_t index, double T_flow,
                   std::uint64_t burn_returns, double phase_window);

}  // namespace aaf
