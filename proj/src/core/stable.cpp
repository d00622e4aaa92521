#include "stable.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/tools/minima.hpp>

#include "error.hpp"
#include "numfmt.hpp"
#include "quadrature.hpp"

namespace aaf {

namespace {

using std::numbers::pi;

struct CdfPdf {
  double F, f;
};

// Standardized law (scale 1, location 0). With k = tan(pi alpha / 2):
//   F(z) = 1/2 - (1/pi) int_0^inf e^{-s^a} sin(k s^a - z s) / s ds
//   f(z) =       (1/pi) int_0^inf e^{-s^a} cos(k s^a - z s) ds
CdfPdf standard_law(double alpha, double z) {
  const double k = std::tan(0.5 * pi * alpha);
  const double s_max = std::pow(42.0, 1.0 / alpha);  // e^{-42} ~ 6e-19
  // panel width resolves the phase k s^a - z s
  const double freq = std::abs(z) + std::abs(k) * alpha * std::pow(s_max, alpha - 1.0) + 1.0;
  const double w = std::min(0.5, 0.5 * pi / freq);
  double F = 0.0, f = 0.0;
  auto add_panel = [&](double a, double b) {
    using Rule = boost::math::quadrature::gauss<double, 10>;
    F += Rule::integrate(
        [&](double s) {
          const double sa = std::pow(s, alpha);
          return std::exp(-sa) * std::sin(k * sa - z * s) / s;
        },
        a, b);
    f += Rule::integrate(
        [&](double s) {
          const double sa = std::pow(s, alpha);
          return std::exp(-sa) * std::cos(k * sa - z * s);
        },
        a, b);
  };
  // geometric grading into s = 0, where s^alpha is not smooth
  double lo = w * std::ldexp(1.0, -40);
  F += (k * std::pow(lo, alpha) / alpha - z * lo);  // leading terms on [0, lo]
  f += lo;
  for (double hi = 2.0 * lo; hi <= w; hi *= 2.0) {
    add_panel(lo, hi);
    lo = hi;
  }
  add_panel(lo, w);
  const int n = static_cast<int>(std::ceil((s_max - w) / w));
  for (int i = 0; i < n; ++i) add_panel(w + i * w, std::min(s_max, w + (i + 1) * w));
  return {std::clamp(0.5 - F / pi, 0.0, 1.0), std::max(0.0, f / pi)};
}

}  // namespace

void validate_stable(const StableSpec& s) {
  if (!(s.alpha > 1.0 && s.alpha <= 2.0))
    fail(ErrorCode::invalid_argument, "stable alpha must lie in (1, 2], got " + fmt_double(s.alpha));
  if (!(s.scale > 0.0) || !std::isfinite(s.scale))
    fail(ErrorCode::invalid_argument, "stable scale must be positive");
  if (!std::isfinite(s.location)) fail(ErrorCode::invalid_argument, "stable location not finite");
}

double stable_cdf(const StableSpec& s, double x) {
  validate_stable(s);
  if (s.alpha == 2.0) return normal_cdf(x, s.location, std::sqrt(2.0) * s.scale);
  return standard_law(s.alpha, (x - s.location) / s.scale).F;
}

double stable_pdf(const StableSpec& s, double x) {
  validate_stable(s);
  if (s.alpha == 2.0) {
    const double sd = std::sqrt(2.0) * s.scale, t = (x - s.location) / sd;
    return std::exp(-0.5 * t * t) / (sd * std::sqrt(2.0 * pi));
  }
  return standard_law(s.alpha, (x - s.location) / s.scale).f / s.scale;
}

double stable_quantile(const StableSpec& s, double p) {
  validate_stable(s);
  if (!(p > 0.0 && p < 1.0)) fail(ErrorCode::invalid_argument, "quantile level must lie in (0, 1)");
  double lo = s.location - s.scale, hi = s.location + s.scale;
  while (stable_cdf(s, lo) > p) lo -= 2.0 * (hi - lo);
  while (stable_cdf(s, hi) < p) hi += 2.0 * (hi - lo);
  return solve_bracketed([&](double x) { return stable_cdf(s, x) - p; }, lo, hi, 1e-10,
                         1e-12 * s.scale, 200, "stable quantile")
      .x;
}

StableCdfTable::StableCdfTable(double alpha) : alpha_(alpha) {
  validate_stable({alpha, 1.0, 0.0});
  // z in [-12, 400] on a sinh grid, dense near the mode
  constexpr double a = 0.5;
  const double u_lo = std::asinh(-12.0 / a), u_hi = std::asinh(400.0 / a);
  constexpr int n = 1600;
  for (int i = 0; i <= n; ++i) {
    const double u = u_lo + (u_hi - u_lo) * i / n;
    const double z = a * std::sinh(u);
    CdfPdf v = alpha == 2.0 ? CdfPdf{normal_cdf(z, 0.0, std::sqrt(2.0)),
                                     std::exp(-0.25 * z * z) / std::sqrt(4.0 * pi)}
                            : standard_law(alpha, z);
    u_.push_back(u);
    z_.push_back(z);
    F_.push_back(v.F);
    f_.push_back(v.f);
  }
}

double StableCdfTable::operator()(double z) const {
  if (z <= z_.front()) return 0.0;
  if (z >= z_.back()) {
    if (alpha_ == 2.0) return 1.0;
    // P(Z > z) ~ c z^{-alpha}, with c matched to the last table value
    const double scale = (1.0 - F_.back()) * std::pow(z_.back(), alpha_);
    return 1.0 - scale * std::pow(z, -alpha_);
  }
  const double u = std::asinh(z / 0.5);
  const double step = u_[1] - u_[0];
  const std::size_t i =
      std::min<std::size_t>(u_.size() - 2, static_cast<std::size_t>((u - u_[0]) / step));
  const double h = z_[i + 1] - z_[i], t = (z - z_[i]) / h;
  const double t2 = t * t, t3 = t2 * t;
  const double v = (2 * t3 - 3 * t2 + 1) * F_[i] + (t3 - 2 * t2 + t) * h * f_[i] +
                   (-2 * t3 + 3 * t2) * F_[i + 1] + (t3 - t2) * h * f_[i + 1];
  return std::clamp(v, 0.0, 1.0);
}

double normal_cdf(double x, double mean, double sd) {
  return 0.5 * std::erfc(-(x - mean) / (sd * std::numbers::sqrt2));
}

double ks_distance(const std::vector<double>& sorted, const std::function<double(double)>& cdf) {
  const double n = static_cast<double>(sorted.size());
  if (sorted.empty()) fail(ErrorCode::invalid_argument, "KS distance of an empty sample");
  double d = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double F = cdf(sorted[i]);
    d = std::max({d, (i + 1) / n - F, F - i / n});
  }
  return d;
}

double cvm_statistic(const std::vector<double>& sorted, const std::function<double(double)>& cdf) {
  const double n = static_cast<double>(sorted.size());
  double acc = 1.0 / (12.0 * n);
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double r = cdf(sorted[i]) - (2.0 * i + 1.0) / (2.0 * n);
    acc += r * r;
  }
  return acc;
}

StableFit fit_stable(const std::vector<double>& sorted, double alpha_lo) {
  if (sorted.size() < 20) fail(ErrorCode::invalid_argument, "stable fit needs at least 20 samples");
  if (!std::is_sorted(sorted.begin(), sorted.end()))
    fail(ErrorCode::invalid_argument, "stable fit expects ascending samples");
  const auto q = [&](double p) { return sorted[static_cast<std::size_t>(p * (sorted.size() - 1))]; };
  const double iqr = q(0.75) - q(0.25);
  if (!(iqr > 0.0)) fail(ErrorCode::invalid_argument, "stable fit: degenerate sample");
  const double mu_lo = q(0.02), mu_hi = q(0.98);
  const double ls_lo = std::log(iqr / 20.0), ls_hi = std::log(iqr * 5.0);
  constexpr int bits = 30;

  struct Inner {
    double mu, ls, cvm;
  };
  // profile over (location, log scale) for a tabulated alpha
  auto profile = [&](const StableCdfTable& tab) {
    auto cvm_at = [&](double mu, double ls) {
      const double sc = std::exp(ls);
      return cvm_statistic(sorted, [&](double x) { return tab((x - mu) / sc); });
    };
    double best_mu = 0.0;
    auto over_scale = [&](double ls) {
      auto r = boost::math::tools::brent_find_minima([&](double mu) { return cvm_at(mu, ls); },
                                                     mu_lo, mu_hi, bits);
      best_mu = r.first;
      return r.second;
    };
    auto r = boost::math::tools::brent_find_minima(over_scale, ls_lo, ls_hi, bits);
    over_scale(r.first);
    return Inner{best_mu, r.first, r.second};
  };

  auto r = boost::math::tools::brent_find_minima(
      [&](double alpha) { return profile(StableCdfTable(alpha)).cvm; }, alpha_lo, 2.0, 12);
  const StableCdfTable tab(r.first);
  const Inner in = profile(tab);
  StableFit out;
  out.spec = {r.first, std::exp(in.ls), in.mu};
  out.cvm = in.cvm;
  out.ks = ks_distance(sorted, [&](double x) { return tab((x - in.mu) / out.spec.scale); });
  return out;
}

}  // namespace aaf
