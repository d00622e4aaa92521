#include "statistics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

#include "error.hpp"
#include "numfmt.hpp"
#include "parallel.hpp"

namespace aaf {

namespace {

void check_tail_input(const std::vector<double>& s, double k_frac) {
  if (s.size() < 10'000)
    fail(ErrorCode::invalid_argument,
         "tail_fit needs at least 1e4 samples, got " + std::to_string(s.size()));
  if (!(k_frac > 0.0 && k_frac <= 0.1))
    fail(ErrorCode::invalid_argument, "k_frac must lie in (0, 0.1], got " + fmt_double(k_frac));
  for (double v : s)
    if (!std::isfinite(v)) fail(ErrorCode::invalid_argument, "tail_fit: non-finite sample");
}

struct LineFit {
  double slope, intercept, slope_se;
};

LineFit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  const double b = sxy / sxx, a = my - b * mx;
  double rss = 0;
  for (std::size_t i = 0; i < x.size(); ++i) rss += std::pow(y[i] - a - b * x[i], 2);
  return {b, a, n > 2 ? std::sqrt(rss / (n - 2) / sxx) : 0.0};
}

TailFit hill(std::vector<double>& s, double k_frac) {
  const std::size_t n = s.size();
  const auto k = static_cast<std::size_t>(std::floor(k_frac * static_cast<double>(n)));
  if (k < 10) fail(ErrorCode::invalid_argument, "tail_fit: too few exceedances (k < 10)");
  // top k + 1 values, descending, in front
  std::nth_element(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(k), s.end(), std::greater<>());
  const double thr = s[k];
  if (!(thr > 0.0)) fail(ErrorCode::invalid_argument, "tail_fit: threshold is not positive");
  double acc = 0.0;
  for (std::size_t i = 0; i < k; ++i) acc += std::log(s[i] / thr);
  if (!(acc > 0.0)) fail(ErrorCode::invalid_argument, "tail_fit: no spread above the threshold");
  TailFit f;
  f.method = TailMethod::hill;
  f.k = k;
  f.k_frac = static_cast<double>(k) / static_cast<double>(n);
  f.threshold = thr;
  f.beta_hat = static_cast<double>(k) / acc;
  f.stderr_ = f.beta_hat / std::sqrt(static_cast<double>(k));
  f.c_hat = f.k_frac * std::pow(thr, f.beta_hat);
  return f;
}

TailFit loglog(std::vector<double>& s, double k_frac) {
  const std::size_t n = s.size();
  const auto k = static_cast<std::size_t>(std::floor(k_frac * static_cast<double>(n)));
  if (k < 1000) fail(ErrorCode::invalid_argument, "tail_fit: loglog needs k_frac * n >= 1000");
  std::partial_sort(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(k + 1), s.end(), std::greater<>());
  // empirical survival between k/100 and k exceedances
  const std::size_t first = k / 100 - 1;
  if (!(s[k - 1] > 0.0)) fail(ErrorCode::invalid_argument, "tail_fit: tail is not positive");
  std::vector<double> lx, ly;
  for (std::size_t i = first; i < k; ++i) {
    if (s[i + 1] == s[i]) continue;  // survival steps at distinct values only
    lx.push_back(std::log(s[i]));
    ly.push_back(std::log(static_cast<double>(i + 1) / static_cast<double>(n)));
  }
  if (lx.size() < 10) fail(ErrorCode::invalid_argument, "tail_fit: too few distinct exceedances");
  const LineFit lf = least_squares(lx, ly);
  TailFit f;
  f.method = TailMethod::loglog;
  f.beta_hat = -lf.slope;
  f.c_hat = std::exp(lf.intercept);
  f.stderr_ = lf.slope_se;
  f.k = k;
  f.k_frac = static_cast<double>(k) / static_cast<double>(n);
  f.threshold = s[k - 1];
  f.t_top = s[first];
  if (!(f.beta_hat > 0.0)) fail(ErrorCode::invalid_argument, "tail_fit: survival is not decaying");
  return f;
}

}  // namespace

TailFit tail_fit(std::vector<double> samples, TailMethod method, double k_frac) {
  check_tail_input(samples, k_frac);
  if (method == TailMethod::hill) return hill(samples, k_frac);
  return loglog(samples, k_frac);
}

std::vector<std::pair<double, double>> survival_curve(std::vector<double> samples,
                                                      std::size_t points) {
  if (samples.empty() || points < 2) fail(ErrorCode::invalid_argument, "survival_curve: empty input");
  std::sort(samples.begin(), samples.end());
  const auto first_pos = std::upper_bound(samples.begin(), samples.end(), 0.0);
  if (first_pos == samples.end()) fail(ErrorCode::invalid_argument, "survival_curve: no positive samples");
  const double lo = std::log(*first_pos), hi = std::log(samples.back());
  const double n = static_cast<double>(samples.size());
  std::vector<std::pair<double, double>> out;
  for (std::size_t i = 0; i < points; ++i) {
    const double t = std::exp(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1));
    const auto above = samples.end() - std::upper_bound(samples.begin(), samples.end(), t);
    const double surv = static_cast<double>(above) / n;
    if (out.empty() || surv < out.back().second) out.emplace_back(t, surv);
  }
  return out;
}

const char* limit_case_name(LimitCase c) {
  switch (c) {
    case LimitCase::stable: return "stable";
    case LimitCase::nonstd_clt: return "nonstd_clt";
    case LimitCase::clt: return "clt";
  }
  return "?";
}

LimitCase limit_case_from_name(const std::string& name) {
  if (name == "stable") return LimitCase::stable;
  if (name == "nonstd_clt" || name == "nonstd") return LimitCase::nonstd_clt;
  if (name == "clt") return LimitCase::clt;
  fail(ErrorCode::invalid_argument, "unknown limit case '" + name + "'");
}

namespace {

bool near_half(double beta, double kappa) {
  return std::abs(kappa - 0.5 * beta) <= 1e-9 * beta;
}

void require_case(LimitCase kind, double beta, double kappa) {
  if (!(beta > 1.0) || !(kappa > 0.0) || !std::isfinite(beta) || !std::isfinite(kappa))
    fail(ErrorCode::inadmissible, "need beta > 1 and kappa > 0");
  bool ok = false;
  switch (kind) {
    case LimitCase::stable:
      ok = beta < 2.0 && kappa > 0.5 * beta && kappa < beta && !near_half(beta, kappa);
      break;
    case LimitCase::nonstd_clt: ok = beta <= 2.0 + 1e-12 && near_half(beta, kappa); break;
    case LimitCase::clt: ok = beta > 2.0 && kappa < beta; break;
  }
  if (!ok)
    fail(ErrorCode::inadmissible, std::string("(beta, kappa) = (") + fmt_double(beta) + ", " +
                                      fmt_double(kappa) + ") is not admissible for the " +
                                      limit_case_name(kind) + " case");
}

}  // namespace

LimitCase admissible_case(double beta, double kappa) {
  for (LimitCase c : {LimitCase::nonstd_clt, LimitCase::stable, LimitCase::clt}) {
    try {
      require_case(c, beta, kappa);
      return c;
    } catch (const Error&) {
    }
  }
  fail(ErrorCode::inadmissible, "(beta, kappa) = (" + fmt_double(beta) + ", " + fmt_double(kappa) +
                                    ") falls in no limit case");
}

double normalizer_b(double T, LimitCase kind, double beta, double kappa, double c) {
  require_case(kind, beta, kappa);
  if (!(T > 1.0) || !std::isfinite(T)) fail(ErrorCode::invalid_argument, "normalizer needs T > 1");
  if (kind != LimitCase::clt && !(c > 0.0))
    fail(ErrorCode::invalid_argument, "tail constant c must be positive");
  switch (kind) {
    case LimitCase::stable: return std::pow(T, kappa / beta) / c;
    case LimitCase::nonstd_clt: return std::sqrt(T * std::log(T) / c);
    case LimitCase::clt: return std::sqrt(T);
  }
  return 0.0;
}

namespace {


// truncated sum of a lazily evaluated autocovariance; fixed_window > 0 skips the search
template <class Cov>
VarianceEstimate green_kubo(Cov&& cov, std::size_t max_lag, double tau_star,
                            std::size_t fixed_window = 0) {
  const double g0 = cov(0);
  if (!(g0 > 0.0)) fail(ErrorCode::nonsummable, "variance_estimate: constant series");
  double sum = 0.0;  // sum of cov(j), j = 1..J
  std::size_t J = 0;
  if (fixed_window > 0) {
    J = std::min(fixed_window, max_lag);
    for (std::size_t j = 1; j <= J; ++j) sum += cov(j);
  } else {
    // Geyer's initial monotone sequence: pair sums cov(2k) + cov(2k+1) are
    // accumulated while positive, each capped by its predecessor
    double prev = std::numeric_limits<double>::infinity();
    double pairs = 0.0;
    bool found = false;
    for (std::size_t k = 0; 2 * k + 1 <= max_lag; ++k) {
      double g = (k == 0 ? g0 : cov(2 * k)) + cov(2 * k + 1);
      if (!(g > 0.0)) {
        found = true;
        break;
      }
      g = std::min(g, prev);
      prev = g;
      pairs += g;
      J = 2 * k + 1;
    }
    if (!found)
      fail(ErrorCode::nonsummable,
           "variance_estimate: autocovariance pairs stay positive up to lag " + std::to_string(max_lag));
    sum = pairs - g0;  // so that g0 + 2 sum = 2 pairs - g0
  }
  VarianceEstimate out;
  out.gamma0 = g0;
  out.sigma2_map = g0 + 2.0 * sum;
  out.tau_int = 0.5 + sum / g0;
  out.window = J;
  out.sigma2 = out.sigma2_map / tau_star;
  return out;
}

void check_halves(const VarianceEstimate& full, const VarianceEstimate& a, const VarianceEstimate& b) {
  if (!(full.sigma2_map > 0.0))
    fail(ErrorCode::nonsummable, "variance_estimate: non-positive long-run variance");
  const double lo = std::min(a.sigma2_map, b.sigma2_map), hi = std::max(a.sigma2_map, b.sigma2_map);
  if (!(lo > 0.0) || hi > 2.0 * lo)
    fail(ErrorCode::nonsummable, "variance_estimate: halves disagree (" + fmt_double(a.sigma2_map) +
                                     " vs " + fmt_double(b.sigma2_map) + ")");
}

}  // namespace

VarianceEstimate variance_estimate(const std::vector<double>& series, double tau_star) {
  const std::size_t n = series.size();
  if (n < 1000) fail(ErrorCode::invalid_argument, "variance_estimate needs at least 1000 values");
  if (!(tau_star > 0.0)) fail(ErrorCode::invalid_argument, "tau_star must be positive");
  const std::size_t max_lag = std::min<std::size_t>(n / 50, 2000);

  auto run = [&](std::size_t lo, std::size_t hi, std::size_t fixed_window) {
    const std::size_t m = hi - lo;
    const double mean =
        std::accumulate(series.begin() + static_cast<std::ptrdiff_t>(lo),
                        series.begin() + static_cast<std::ptrdiff_t>(hi), 0.0) /
        static_cast<double>(m);
    std::vector<double> x(m);
    for (std::size_t i = 0; i < m; ++i) x[i] = series[lo + i] - mean;
    auto cov = [&](std::size_t j) {
      double acc = 0.0;
      for (std::size_t i = 0; i + j < m; ++i) acc += x[i] * x[i + j];
      return acc / static_cast<double>(m);
    };
    return green_kubo(cov, max_lag, tau_star, fixed_window);
  };
  const VarianceEstimate full = run(0, n, 0);
  check_halves(full, run(0, n / 2, full.window), run(n / 2, n, full.window));
  return full;
}

LaggedMoments::LaggedMoments(std::size_t max_lag)
    : L_(max_lag), ra_(max_lag + 1), rb_(max_lag + 1), part_(4 * (max_lag + 1) + 2),
      tot_(part_.size()) {}

void LaggedMoments::add(double a, double b) {
  const std::size_t W = L_ + 1;
  const std::size_t slot = n_ % W;
  ra_[slot] = a;
  rb_[slot] = b;
  const std::size_t lags = static_cast<std::size_t>(std::min<std::uint64_t>(n_, L_));
  double* aa = part_.data();
  double* ab = aa + W;
  double* ba = ab + W;
  double* bb = ba + W;
  for (std::size_t j = 0; j <= lags; ++j) {
    const std::size_t k = (slot + W - j) % W;  // index i - j
    aa[j] += ra_[k] * a;
    ab[j] += ra_[k] * b;
    ba[j] += rb_[k] * a;
    bb[j] += rb_[k] * b;
  }
  part_[4 * W] += a;
  part_[4 * W + 1] += b;
  ++n_;
  if (++in_chunk_ == 4096) flush();
}

void LaggedMoments::flush() {
  for (std::size_t i = 0; i < part_.size(); ++i) {
    tot_[i] += part_[i];
    part_[i] = 0.0;
  }
  in_chunk_ = 0;
}

void LaggedMoments::merge(const LaggedMoments& o) {
  if (o.L_ != L_) fail(ErrorCode::invalid_argument, "LaggedMoments: lag mismatch");
  flush();
  for (std::size_t i = 0; i < tot_.size(); ++i) tot_[i] += o.tot_[i] + o.part_[i];
  n_ += o.n_;
}

std::vector<double> LaggedMoments::autocov(double m) const {
  const std::size_t W = L_ + 1;
  if (n_ <= 2 * L_) fail(ErrorCode::invalid_argument, "LaggedMoments: series shorter than 2 max_lag");
  auto t = [&](std::size_t i) { return tot_[i] + static_cast<long double>(part_[i]); };
  const long double n = static_cast<long double>(n_);
  const long double mean = (t(4 * W) - m * t(4 * W + 1)) / n;
  std::vector<double> out(W);
  for (std::size_t j = 0; j < W; ++j) {
    const long double sxx = t(j) - m * (t(W + j) + t(2 * W + j)) + m * m * t(3 * W + j);
    out[j] = static_cast<double>(sxx / (n - static_cast<long double>(j)) - mean * mean);
  }
  return out;
}

VarianceEstimate variance_estimate(const LaggedMoments& first, const LaggedMoments& second,
                                   double m, double tau_star) {
  if (!(tau_star > 0.0)) fail(ErrorCode::invalid_argument, "tau_star must be positive");
  LaggedMoments all = first;
  all.merge(second);
  const std::vector<double> c = all.autocov(m), ca = first.autocov(m), cb = second.autocov(m);
  const std::size_t L = all.max_lag();
  const VarianceEstimate full = green_kubo([&](std::size_t j) { return c[j]; }, L, tau_star);
  check_halves(full, green_kubo([&](std::size_t j) { return ca[j]; }, L, tau_star, full.window),
               green_kubo([&](std::size_t j) { return cb[j]; }, L, tau_star, full.window));
  return full;
}

Centering estimate_centering(const HybridSystem& sys, std::uint64_t seed, std::uint64_t n_burn,
                             std::uint64_t n) {
  if (n == 0) fail(ErrorCode::invalid_argument, "centering needs at least one return");
  // Kahan-free long double sums are plenty for 1e8 terms of size O(10)
  long double sp = 0, st = 0;
  srb_stream(sys, seed, n_burn, n, [&](const ReturnRecord& r) {
    sp += r.psi_bar;
    st += r.tau;
  });
  return {static_cast<double>(sp / n), static_cast<double>(st / n), n};
}

double flow_sample(const HybridSystem& sys, std::uint64_t seed, std::uint64_t index, double T_flow,
                   std::uint64_t burn_returns, double phase_window) {
  auto rng = stream_rng(seed, index + 1);
  SectionPoint q = sys.random_point_in_Y(rng);
  for (std::uint64_t i = 0; i < burn_returns; ++i) q = sys.induced_return(q).end;
  FlowCursor cur(sys, q);
  if (phase_window > 0.0) cur.advance(phase_window * uniform01(rng));
  return cur.advance(T_flow);
}

namespace {

// mixes the user seed into an independent stream family for centering runs
std::uint64_t centering_seed(std::uint64_t seed) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// P(psi_0 > t) ~ c t^{-a}: c from the top 1e-3 of the sample with the exponent fixed.
double tail_constant(std::vector<double> psi0, double a) {
  const std::size_t n = psi0.size();
  std::sort(psi0.begin(), psi0.end(), std::greater<>());
  // average of (k/n) x_(k)^a over k on a log grid from 1e-4 n to 1e-3 n
  double acc = 0.0;
  int cnt = 0;
  for (double f = 1e-4; f <= 1e-3 * 1.0001; f *= std::pow(10.0, 0.125)) {
    const auto k = static_cast<std::size_t>(f * static_cast<double>(n));
    if (k < 10 || k >= n) continue;
    acc += static_cast<double>(k) / static_cast<double>(n) * std::pow(psi0[k - 1], a);
    ++cnt;
  }
  if (cnt == 0 || !(acc > 0.0)) fail(ErrorCode::invalid_argument, "tail constant: sample too small");
  return acc / cnt;
}

}  // namespace

LimitReport limit_experiment(const HybridSystem& sys, const LimitOptions& opt) {
  if (opt.n_samples < 20) fail(ErrorCode::invalid_argument, "limit experiment needs >= 20 samples");
  if (!(opt.T_flow > 1.0)) fail(ErrorCode::invalid_argument, "T_flow must exceed 1");
  const DerivedConstants& dc = sys.dc();
  const PotentialSpec& pot = sys.params().psi;
  LimitReport rep;
  rep.kind = opt.kind;
  rep.T_flow = opt.T_flow;
  rep.beta = dc.beta;
  rep.kappa = dc.kappa;
  rep.ks_threshold = opt.ks_threshold >= 0 ? opt.ks_threshold
                                           : (opt.kind == LimitCase::clt ? 0.02 : 0.05);
  const bool degenerate_potential = pot.scale == 0.0;
  if (!degenerate_potential) require_case(opt.kind, dc.beta, dc.kappa);

  // centering, tail data and Green-Kubo moments on a stream independent of the samples
  std::vector<double> psi0;
  const bool want_tail = opt.kind != LimitCase::clt && !degenerate_potential;
  const bool want_gk = opt.kind == LimitCase::clt && !degenerate_potential;
  constexpr std::size_t kMaxLag = 64;
  LaggedMoments first(want_gk ? kMaxLag : 0), second(want_gk ? kMaxLag : 0);
  {
    long double sp = 0, st = 0;
    // tail constant from a prefix, to bound memory
    const std::uint64_t n_tail = std::min<std::uint64_t>(opt.n_centering, 20'000'000);
    if (want_tail) psi0.reserve(n_tail);
    std::uint64_t i = 0;
    srb_stream(sys, centering_seed(opt.seed), opt.n_burn, opt.n_centering,
               [&](const ReturnRecord& r) {
                 sp += r.psi_bar;
                 st += r.tau;
                 if (want_tail && i < n_tail) psi0.push_back(pot.offset + pot.flat * r.tau - r.psi_bar);
                 if (want_gk) (2 * i < opt.n_centering ? first : second).add(r.psi_bar, r.tau);
                 ++i;
               });
    rep.psi_star = static_cast<double>(sp / opt.n_centering);
    rep.tau_star = static_cast<double>(st / opt.n_centering);
    rep.centering = rep.psi_star / rep.tau_star;
  }

  if (degenerate_potential) {
    rep.b = std::sqrt(opt.T_flow);
  } else if (opt.kind == LimitCase::clt) {
    rep.b = normalizer_b(opt.T_flow, opt.kind, dc.beta, dc.kappa, 1.0);
  } else {
    rep.c_tail = tail_constant(psi0, dc.beta / dc.kappa);
    rep.b = normalizer_b(opt.T_flow, opt.kind, dc.beta, dc.kappa, rep.c_tail);
  }
  psi0.clear();
  psi0.shrink_to_fit();

  const double phase = opt.phase_window < 0 ? opt.T_flow : opt.phase_window;
  std::vector<double> z(opt.n_samples);
  parallel_for(opt.n_samples, opt.threads, [&](std::uint64_t i) {
    const double psiT = flow_sample(sys, opt.seed, i, opt.T_flow, opt.sample_burn, phase);
    z[i] = (psiT - rep.centering * opt.T_flow) / rep.b;
  });
  rep.sample_count = opt.n_samples;
  rep.normalized = z;

  const double n = static_cast<double>(z.size());
  const double mean = std::accumulate(z.begin(), z.end(), 0.0) / n;
  double m2 = 0.0, raw2 = 0.0;
  for (double v : z) {
    m2 += (v - mean) * (v - mean);
    raw2 += v * v;
  }
  const double sd = std::sqrt(m2 / (n - 1.0));
  rep.sigma2_direct = raw2 / n;
  if (!(sd > 1e-9)) {
    rep.degenerate = true;
    rep.ks_distance = 0.0;
    rep.pass = false;
    return rep;
  }

  std::vector<double> sorted = z;
  switch (opt.kind) {
    case LimitCase::clt: {
      const VarianceEstimate ve = variance_estimate(first, second, rep.centering, rep.tau_star);
      rep.sigma2_gk = ve.sigma2;
      rep.sigma2 = ve.sigma2;
      std::sort(sorted.begin(), sorted.end());
      const double s = std::sqrt(rep.sigma2);
      rep.ks_distance = ks_distance(sorted, [&](double x) { return normal_cdf(x, 0.0, s); });
      const bool var_ok = std::abs(rep.sigma2_gk / rep.sigma2_direct - 1.0) <= opt.var_tolerance;
      rep.pass = rep.ks_distance < rep.ks_threshold && var_ok;
      break;
    }
    case LimitCase::nonstd_clt: {
      rep.sigma2 = rep.sigma2_direct;
      std::sort(sorted.begin(), sorted.end());
      const double s = std::sqrt(rep.sigma2);
      rep.ks_distance = ks_distance(sorted, [&](double x) { return normal_cdf(x, 0.0, s); });
      rep.pass = rep.ks_distance < rep.ks_threshold;
      break;
    }
    case LimitCase::stable: {
      // psi_bar = C' - psi_0 with psi_0 heavy to the right, so the sums skew left
      rep.reflected = true;
      for (double& v : sorted) v = -v;
      std::sort(sorted.begin(), sorted.end());
      rep.alpha_target = dc.beta / dc.kappa;
      const StableFit fit = fit_stable(sorted);
      rep.fitted = fit.spec;
      rep.ks_distance = fit.ks;
      rep.pass = rep.ks_distance < rep.ks_threshold &&
                 std::abs(fit.spec.alpha - rep.alpha_target) <= opt.alpha_tolerance;
      break;
    }
  }
  return rep;
}

}  // namespace aaf
