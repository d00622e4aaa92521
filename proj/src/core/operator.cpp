#include "operator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "error.hpp"
#include "numfmt.hpp"
#include "parallel.hpp"
#include "quadrature.hpp"

namespace aaf {

namespace {

constexpr double kLambdaU = 2.6180339887498949;

struct Sample {
  std::int32_t from, to, level;
  double w, wt, wp, tmin, tmax;
};

int grid_id(int n, const SectionPoint& q) {
  const int ix = std::clamp(static_cast<int>(std::floor((q.x + 0.5) * n)), 0, n - 1);
  const int iy = std::clamp(static_cast<int>(std::floor((q.y + 0.5) * n)), 0, n - 1);
  return iy * n + ix;
}

double sum_of(const std::vector<double>& v) {
  // fixed-order pairwise sum, independent of thread count
  std::vector<double> a = v;
  while (a.size() > 1) {
    const std::size_t h = (a.size() + 1) / 2;
    for (std::size_t i = 0; i + h < a.size(); ++i) a[i] += a[i + h];
    a.resize(h);
  }
  return a.empty() ? 0.0 : a[0];
}

}  // namespace

int UlamBase::box_index(const SectionPoint& q) const {
  return active[static_cast<std::size_t>(grid_id(resolution, q))];
}

UlamBase build_ulam(const HybridSystem& sys, const UlamOptions& opt) {
  if (opt.resolution < 32) fail(ErrorCode::invalid_argument, "Ulam resolution must be >= 32");
  if (opt.samples_per_box < 64) fail(ErrorCode::invalid_argument, "samples_per_box must be >= 64");
  if (opt.strip_samples < 1000) fail(ErrorCode::invalid_argument, "strip_samples must be >= 1000");
  if (!(opt.level_ratio > 1.0 && opt.level_ratio <= 1.2))
    fail(ErrorCode::invalid_argument, "level_ratio must lie in (1, 1.2]");
  if (opt.r_max < 10) fail(ErrorCode::invalid_argument, "r_max must be >= 10");

  const int n = opt.resolution;
  const std::size_t nbox = static_cast<std::size_t>(n) * static_cast<std::size_t>(n);
  const double h = 1.0 / n;
  const double eps = sys.eps();
  const PotentialSpec& pot = sys.params().psi;
  const double psi_flat_return = pot.offset + pot.flat;

  // cat-map part: uniform points per box, strip points left to the sampler below
  std::vector<std::vector<Sample>> per_box(nbox);
  std::vector<double> y_mass(nbox, 0.0);
  const int max_attempts = 16 * opt.samples_per_box;
  parallel_for(nbox, opt.threads, [&](std::uint64_t b) {
    auto rng = stream_rng(opt.seed, (1ULL << 40) + b);
    const int ix = static_cast<int>(b % static_cast<std::uint64_t>(n));
    const int iy = static_cast<int>(b / static_cast<std::uint64_t>(n));
    int in_y = 0, attempts = 0;
    std::vector<SectionPoint> plain;
    while (in_y < opt.samples_per_box && attempts < max_attempts) {
      ++attempts;
      const SectionPoint q{-0.5 + (ix + uniform01(rng)) * h, -0.5 + (iy + uniform01(rng)) * h};
      if (sys.in_chart(q)) continue;
      ++in_y;
      if (!sys.in_chart(sys.cat(q))) plain.push_back(q);
    }
    const double w = h * h / attempts;
    y_mass[b] = w * in_y;
    auto& out = per_box[b];
    for (const SectionPoint& q : plain) {
      const int j = grid_id(n, sys.cat(q));
      out.push_back({static_cast<std::int32_t>(b), j, 0, w, w, w * psi_flat_return, 1.0, 1.0});
    }
  });

  // strip part: importance sampling in entry coordinates (xi, eta), with
  // |eta| uniform on (eps/lambda, eps) and |xi| from a uniform / log-uniform mixture
  const DerivedConstants& dc = sys.dc();
  const double xi_min =
      0.5 * std::min(xi_zero(dc, eps / kLambdaU), xi_zero(dc, eps)) *
      std::pow(static_cast<double>(opt.r_max), -dc.beta);
  if (!(xi_min > 0.0) || !(xi_min < eps))
    fail(ErrorCode::domain, "strip sampler: bad xi range, xi_min = " + fmt_double(xi_min));
  const double log_span = std::log(eps / xi_min);
  const double area_R = 4.0 * eps * eps * (1.0 - 1.0 / kLambdaU);
  const double w0 = area_R / static_cast<double>(opt.strip_samples);
  const double log_ratio = std::log(opt.level_ratio);
  constexpr std::uint64_t kChunk = 4096;
  const std::uint64_t nchunk = (opt.strip_samples + kChunk - 1) / kChunk;
  std::vector<std::vector<Sample>> per_chunk(nchunk);
  std::vector<double> chunk_trunc(nchunk, 0.0);
  parallel_for(nchunk, opt.threads, [&](std::uint64_t c) {
    auto rng = stream_rng(opt.seed, (1ULL << 41) + c);
    const std::uint64_t lo = c * kChunk, hi = std::min(opt.strip_samples, lo + kChunk);
    auto& out = per_chunk[c];
    for (std::uint64_t k = lo; k < hi; ++k) {
      const double sx = uniform01(rng) < 0.5 ? -1.0 : 1.0;
      const double sy = uniform01(rng) < 0.5 ? -1.0 : 1.0;
      const double eta = eps / kLambdaU + (eps - eps / kLambdaU) * uniform01(rng);
      const double xi = uniform01(rng) < 0.5 ? eps * uniform01(rng)
                                             : xi_min * std::exp(log_span * uniform01(rng));
      if (!(xi > 0.0) || !(xi < eps)) continue;  // measure zero
      double dens = 0.5 / eps;
      if (xi >= xi_min) dens += 0.5 / (xi * log_span);
      const double w = w0 * (1.0 / eps) / dens;
      if (xi < xi_min) {
        chunk_trunc[c] += w;
        continue;
      }
      const SectionPoint e = sys.to_torus({sx * xi, sy * eta});
      const SectionPoint q = HybridSystem::wrap(e.x - e.y, 2.0 * e.y - e.x);
      if (sys.in_chart(q)) continue;  // not a strip point
      const ReturnDetail d = sys.entry_detail({sx * xi, sy * eta});
      if (d.rec.r > opt.r_max) {
        chunk_trunc[c] += w;
        continue;
      }
      const double t = d.rec.tau;
      const int level = 1 + static_cast<int>(std::floor(std::log(t) / log_ratio));
      out.push_back({grid_id(n, d.rec.start), grid_id(n, d.rec.end), level, w, w * t,
                     w * d.rec.psi_bar, t, t});
    }
  });

  std::vector<Sample> all;
  {
    std::size_t total = 0;
    for (const auto& v : per_box) total += v.size();
    for (const auto& v : per_chunk) total += v.size();
    all.reserve(total);
    for (auto& v : per_box) all.insert(all.end(), v.begin(), v.end());
    for (auto& v : per_chunk) all.insert(all.end(), v.begin(), v.end());
    per_box.clear();
    per_chunk.clear();
  }
  std::stable_sort(all.begin(), all.end(), [](const Sample& a, const Sample& b) {
    if (a.from != b.from) return a.from < b.from;
    if (a.to != b.to) return a.to < b.to;
    return a.level < b.level;
  });
  // merge equal (from, to, level)
  std::vector<Sample> merged;
  for (const Sample& s : all) {
    if (!merged.empty() && merged.back().from == s.from && merged.back().to == s.to &&
        merged.back().level == s.level) {
      Sample& m = merged.back();
      m.w += s.w;
      m.wt += s.wt;
      m.wp += s.wp;
      m.tmin = std::min(m.tmin, s.tmin);
      m.tmax = std::max(m.tmax, s.tmax);
    } else {
      merged.push_back(s);
    }
  }
  all.clear();
  all.shrink_to_fit();

  UlamBase base;
  base.resolution = n;
  base.active.assign(nbox, -1);
  std::vector<double> out_mass(nbox, 0.0);
  for (const Sample& s : merged) out_mass[static_cast<std::size_t>(s.from)] += s.w;
  for (std::size_t b = 0; b < nbox; ++b)
    if (out_mass[b] > 0.0) {
      base.active[b] = static_cast<std::int32_t>(base.box_of.size());
      base.box_of.push_back(static_cast<std::int32_t>(b));
    }
  const std::size_t na = base.box_of.size();
  if (na == 0) fail(ErrorCode::domain, "Ulam build found no boxes in Y");

  double leaked = 0.0, strip_mass = 0.0, y_total = 0.0;
  for (double m : y_mass) y_total += m;
  base.mass.assign(na, 0.0);
  base.row_ptr.assign(na + 1, 0);
  std::vector<double> row_w(na, 0.0);
  for (const Sample& s : merged) {
    if (s.level > 0) strip_mass += s.w;
    const std::int32_t j = base.active[static_cast<std::size_t>(s.to)];
    if (j < 0) {
      leaked += s.w;
      continue;
    }
    const std::int32_t i = base.active[static_cast<std::size_t>(s.from)];
    row_w[static_cast<std::size_t>(i)] += s.w;
    base.row_ptr[static_cast<std::size_t>(i) + 1] += 1;
  }
  for (std::size_t i = 0; i < na; ++i) base.row_ptr[i + 1] += base.row_ptr[i];
  const std::size_t nnz = base.row_ptr[na];
  base.col.resize(nnz);
  base.prob.resize(nnz);
  base.tau.resize(nnz);
  base.psi.resize(nnz);
  std::vector<std::int32_t> row_of(nnz);
  {
    std::vector<std::uint64_t> fill(base.row_ptr.begin(), base.row_ptr.end() - 1);
    for (const Sample& s : merged) {
      const std::int32_t j = base.active[static_cast<std::size_t>(s.to)];
      if (j < 0) continue;
      const std::int32_t i = base.active[static_cast<std::size_t>(s.from)];
      const std::uint64_t k = fill[static_cast<std::size_t>(i)]++;
      base.col[k] = j;
      base.prob[k] = s.w / row_w[static_cast<std::size_t>(i)];
      base.tau[k] = s.wt / s.w;
      base.psi[k] = s.wp / s.w;
      row_of[k] = i;
      if (s.level > 0)
        base.max_level_osc = std::max(base.max_level_osc, (s.tmax - s.tmin) / s.tmin);
    }
  }
  for (std::size_t i = 0; i < na; ++i) base.mass[i] = row_w[i];

  // transposed index
  base.col_ptr.assign(na + 1, 0);
  for (std::int32_t j : base.col) base.col_ptr[static_cast<std::size_t>(j) + 1] += 1;
  for (std::size_t j = 0; j < na; ++j) base.col_ptr[j + 1] += base.col_ptr[j];
  base.perm.resize(nnz);
  {
    std::vector<std::uint64_t> fill(base.col_ptr.begin(), base.col_ptr.end() - 1);
    for (std::uint64_t k = 0; k < nnz; ++k) base.perm[fill[static_cast<std::size_t>(base.col[k])]++] = k;
  }
  base.row_of_ = std::move(row_of);
  for (std::size_t j = 0; j < na; ++j)
    if (base.col_ptr[j + 1] == base.col_ptr[j]) ++base.unreachable;

  double trunc = 0.0;
  for (double t : chunk_trunc) trunc += t;
  const double denom = y_total > 0.0 ? y_total : 1.0;
  base.truncated_mass = trunc / denom;
  base.leaked_mass = leaked / denom;
  base.strip_fraction = strip_mass / denom;
  base.strip_samples_used = opt.strip_samples;
  base.threads = opt.threads;
  if (base.leaked_mass > 1e-3)
    fail(ErrorCode::domain, "Ulam leakage " + fmt_double(base.leaked_mass) + " exceeds 1e-3");
  return base;
}

TwistedOperator twist(const UlamBase& base, double u, double s, bool log_domain,
                      unsigned threads) {
  if (!(u >= 0.0) || !(s >= 0.0) || !std::isfinite(u) || !std::isfinite(s))
    fail(ErrorCode::invalid_argument, "twist needs finite u >= 0 and s >= 0");
  TwistedOperator op;
  op.base = &base;
  op.u = u;
  op.s = s;
  op.threads = threads == 0 ? base.threads : threads;
  op.w.resize(base.nnz());
  for (std::size_t k = 0; k < base.nnz(); ++k) {
    const double e = -u * base.tau[k] + s * base.psi[k];
    op.w[k] = log_domain ? std::exp(std::log(base.prob[k]) + e) : base.prob[k] * std::exp(e);
  }
  if (u == 0.0 && s == 0.0) op.w = base.prob;
  return op;
}

namespace {
constexpr std::uint64_t kRowBlock = 2048;
}  // namespace

void apply_right(const TwistedOperator& op, const std::vector<double>& v, std::vector<double>& out) {
  const UlamBase& b = *op.base;
  out.assign(b.size(), 0.0);
  const std::uint64_t nb = (b.size() + kRowBlock - 1) / kRowBlock;
  parallel_for(nb, op.threads, [&](std::uint64_t blk) {
    const std::size_t hi = std::min<std::size_t>(b.size(), (blk + 1) * kRowBlock);
    for (std::size_t i = blk * kRowBlock; i < hi; ++i) {
      double acc = 0.0;
      for (std::uint64_t k = b.row_ptr[i]; k < b.row_ptr[i + 1]; ++k)
        acc += op.w[k] * v[static_cast<std::size_t>(b.col[k])];
      out[i] = acc;
    }
  });
}

void apply_left(const TwistedOperator& op, const std::vector<double>& v, std::vector<double>& out) {
  const UlamBase& b = *op.base;
  out.assign(b.size(), 0.0);
  const std::uint64_t nb = (b.size() + kRowBlock - 1) / kRowBlock;
  parallel_for(nb, op.threads, [&](std::uint64_t blk) {
    const std::size_t hi = std::min<std::size_t>(b.size(), (blk + 1) * kRowBlock);
    for (std::size_t j = blk * kRowBlock; j < hi; ++j) {
      double acc = 0.0;
      for (std::uint64_t p = b.col_ptr[j]; p < b.col_ptr[j + 1]; ++p) {
        const std::uint64_t k = b.perm[p];
        acc += v[static_cast<std::size_t>(b.row_of_[k])] * op.w[k];
      }
      out[j] = acc;
    }
  });
}

namespace {

struct PowerOut {
  double lambda, residual, contraction;
  std::uint64_t iterations;
};

// v is normalized to sum `norm` on exit
template <class Apply>
PowerOut power(Apply&& apply, std::vector<double>& v, double norm, double tol,
               std::uint64_t max_iter) {
  std::vector<double> y;
  double lam_prev = 0.0, diff_prev = 0.0, contraction = 0.0;
  for (std::uint64_t it = 1; it <= max_iter; ++it) {
    apply(v, y);
    const double sy = sum_of(y), sv = sum_of(v);
    if (!(sy > 0.0) || !std::isfinite(sy))
      fail(ErrorCode::no_convergence, "power iteration: vector collapsed to zero");
    const double lam = sy / sv;
    double res = 0.0, vmax = 0.0, diff = 0.0;
    const double scale = norm / sy;
    for (std::size_t i = 0; i < v.size(); ++i) {
      res = std::max(res, std::abs(y[i] - lam * v[i]));
      vmax = std::max(vmax, std::abs(v[i]));
      diff = std::max(diff, std::abs(y[i] * scale - v[i] * (norm / sv)));
    }
    res /= vmax;
    if (diff_prev > 0.0 && diff > 0.0) contraction = diff / diff_prev;
    diff_prev = diff;
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = y[i] * scale;
    const double rel = tol * std::max(1.0, lam);
    if (it > 2 && std::abs(lam - lam_prev) < rel && res < 10.0 * rel)
      return {lam, res, contraction, it};
    lam_prev = lam;
  }
  fail(ErrorCode::no_convergence,
       "power iteration did not converge in " + std::to_string(max_iter) +
           " iterations (contraction ratio " + fmt_double(contraction) + ")");
}

}  // namespace

EigenResult leading_eigen(const TwistedOperator& op, double tol, bool with_left,
                          const std::vector<double>* start, std::uint64_t max_iter) {
  const UlamBase& b = *op.base;
  const std::size_t n = b.size();
  for (double w : op.w)
    if (!std::isfinite(w) || w < 0.0) fail(ErrorCode::invalid_argument, "operator has bad entries");
  EigenResult r;
  r.right_vec = (start && start->size() == n) ? *start : std::vector<double>(n, 1.0);
  const PowerOut pr = power([&](const std::vector<double>& v, std::vector<double>& y) { apply_right(op, v, y); },
                            r.right_vec, static_cast<double>(n), tol, max_iter);
  r.lambda = pr.lambda;
  r.residual = pr.residual;
  r.iterations = pr.iterations;
  r.contraction = pr.contraction;
  if (with_left) {
    r.left_vec.assign(n, 1.0 / static_cast<double>(n));
    const PowerOut pl = power([&](const std::vector<double>& v, std::vector<double>& y) { apply_left(op, v, y); },
                              r.left_vec, 1.0, tol, max_iter);
    r.lambda_left = pl.lambda;
    r.iterations += pl.iterations;
  }
  return r;
}

UlamMeans ulam_means(const UlamBase& base, double tol) {
  const TwistedOperator op = twist(base, 0.0, 0.0);
  const EigenResult er = leading_eigen(op, tol, true);
  UlamMeans m{0.0, 0.0, er.left_vec};
  std::vector<double> rt(base.size()), rp(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) {
    double t = 0.0, p = 0.0;
    for (std::uint64_t k = base.row_ptr[i]; k < base.row_ptr[i + 1]; ++k) {
      t += base.prob[k] * base.tau[k];
      p += base.prob[k] * base.psi[k];
    }
    rt[i] = er.left_vec[i] * t;
    rp[i] = er.left_vec[i] * p;
  }
  m.tau_hat = sum_of(rt);
  m.psi_hat = sum_of(rp);
  return m;
}

namespace {

struct Fit {
  double slope, prefactor, rms;
};

Fit power_fit(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (y[i] > 0.0 && x[i] > 0.0) {
      lx.push_back(std::log(x[i]));
      ly.push_back(std::log(y[i]));
    }
  if (lx.size() < 3) fail(ErrorCode::invalid_argument, "power fit needs at least 3 positive points");
  const double n = static_cast<double>(lx.size());
  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / n;
  const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  const double b = sxy / sxx, a = my - b * mx;
  double rss = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) rss += std::pow(ly[i] - a - b * lx[i], 2);
  return {b, std::exp(a), std::sqrt(rss / n)};
}

}  // namespace

EigenCurveFit eigen_curve_u(const UlamBase& base, const std::vector<double>& u_grid, double s,
                            double fit_lo, double fit_hi) {
  if (u_grid.empty()) fail(ErrorCode::invalid_argument, "empty u grid");
  std::vector<double> us = u_grid;
  std::sort(us.begin(), us.end());
  for (double u : us)
    if (!(u > 0.0)) fail(ErrorCode::invalid_argument, "u grid must be positive");
  EigenCurveFit out;
  out.tau_hat = ulam_means(base).tau_hat;
  out.fit_lo = fit_lo;
  out.fit_hi = fit_hi;
  std::vector<double> warm;
  std::vector<double> fx, fy;
  for (double u : us) {
    const TwistedOperator op = twist(base, u, s);
    const EigenResult er = leading_eigen(op, 1e-15, false, warm.empty() ? nullptr : &warm);
    warm = er.right_vec;
    out.points.push_back({u, s, er.lambda, 1.0 - er.lambda});
    if (u >= fit_lo * (1 - 1e-12) && u <= fit_hi * (1 + 1e-12)) {
      fx.push_back(u);
      fy.push_back(std::abs(-std::log(er.lambda) - out.tau_hat * u));
    }
  }
  if (fx.size() >= 3) {
    const Fit f = power_fit(fx, fy);
    out.slope = f.slope;
    out.prefactor = f.prefactor;
    out.fit_rms = f.rms;
  }
  return out;
}

double pressure_induced(const UlamBase& base, double s) {
  return std::log(leading_eigen(twist(base, 0.0, s), 1e-15).lambda);
}

double pressure_flow(const UlamBase& base, double s) {
  const EigenResult e0 = leading_eigen(twist(base, 0.0, s), 1e-15);
  if (s == 0.0) return 0.0;
  const double p0 = std::log(e0.lambda);
  if (!(p0 > 0.0))
    fail(ErrorCode::root_not_bracketed,
         "pressure_flow: lambda(0, s) = " + fmt_double(e0.lambda) + " <= 1, no bracket");
  std::vector<double> warm = e0.right_vec;
  auto f = [&](double u) {
    const EigenResult er = leading_eigen(twist(base, u, s), 1e-15, false, &warm);
    warm = er.right_vec;
    return std::log(er.lambda);
  };
  // tau >= 1 gives lambda(u, s) <= exp(-u) lambda(0, s), so log lambda(p0, s) <= 0
  return solve_bracketed(f, 0.0, p0, 1e-12, 1e-18, 200, "flow pressure").x;
}

RelPresReport verify_relpres(const UlamBase& base, const std::vector<double>& s_grid) {
  if (s_grid.size() < 2) fail(ErrorCode::invalid_argument, "s grid needs two points");
  std::vector<double> ss = s_grid;
  std::sort(ss.begin(), ss.end());
  RelPresReport rep;
  const UlamMeans m = ulam_means(base);
  rep.tau_hat = m.tau_hat;
  rep.psi_hat = m.psi_hat;
  std::vector<double> px, py;
  for (double s : ss) {
    if (!(s > 0.0)) fail(ErrorCode::invalid_argument, "s grid must be positive");
    const double pbar = pressure_induced(base, s);
    const double u0 = pressure_flow(base, s);
    rep.rows.push_back({s, u0, pbar, u0 * m.tau_hat / pbar});
    px.push_back(s);
    py.push_back(std::abs(pbar - m.psi_hat * s));
  }
  rep.gap_decreasing = true;
  for (std::size_t i = 1; i < rep.rows.size(); ++i)
    if (std::abs(rep.rows[i - 1].ratio - 1.0) > std::abs(rep.rows[i].ratio - 1.0) + 1e-12)
      rep.gap_decreasing = false;
  if (px.size() >= 3) {
    const Fit f = power_fit(px, py);
    rep.phase_slope = f.slope;
    rep.phase_prefactor = f.prefactor;
  }
  return rep;
}

std::vector<double> pi_curve(const HybridSystem& sys, const std::vector<double>& u_grid,
                             std::uint64_t seed, std::uint64_t n_burn, std::uint64_t n) {
  if (n == 0) fail(ErrorCode::invalid_argument, "pi_curve needs returns");
  std::vector<long double> acc(u_grid.size(), 0.0L);
  srb_stream(sys, seed, n_burn, n, [&](const ReturnRecord& r) {
    for (std::size_t i = 0; i < u_grid.size(); ++i) acc[i] += -std::expm1(-u_grid[i] * r.tau);
  });
  std::vector<double> out(u_grid.size());
  for (std::size_t i = 0; i < u_grid.size(); ++i) out[i] = static_cast<double>(acc[i] / n);
  return out;
}

std::vector<double> log_grid(double lo, double hi, std::size_t points) {
  if (!(lo > 0.0) || !(hi >= lo) || points < 1)
    fail(ErrorCode::invalid_argument, "log_grid needs 0 < lo <= hi and points >= 1");
  std::vector<double> g(points);
  for (std::size_t i = 0; i < points; ++i)
    g[i] = points == 1 ? lo
                       : std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) *
                                                     static_cast<double>(i) /
                                                     static_cast<double>(points - 1));
  return g;
}

}  // namespace aaf
