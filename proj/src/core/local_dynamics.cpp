#include "local_dynamics.hpp"

#include <algorithm>
#include <boost/math/special_functions/beta.hpp>
#include <cmath>
#include <limits>
#include <sstream>

#include "error.hpp"
#include "quadrature.hpp"

namespace aaf {

namespace {

// log(c0 + c2 e^(2s)) without overflow at either end
double log_c(const DerivedConstants& dc, double s) {
  if (s < 0.0) return std::log(dc.c0) + std::log1p(dc.c2 / dc.c0 * std::exp(2.0 * s));
  return 2.0 * s + std::log(dc.c2) + std::log1p(dc.c0 / dc.c2 * std::exp(-2.0 * s));
}

double log_profile(const HomogeneousSpec& th, double s) {
  // log of (px + qy e^(2s))^(rho/2)
  double lq;
  if (s < 0.0)
    lq = std::log(th.px) + std::log1p(th.qy / th.px * std::exp(2.0 * s));
  else
    lq = 2.0 * s + std::log(th.qy) + std::log1p(th.px / th.qy * std::exp(-2.0 * s));
  return 0.5 * th.rho * lq;
}

void require_positive_delta(const DerivedConstants& dc) {
  if (!(dc.delta > 0.0))
    fail(ErrorCode::invalid_argument, "local dynamics supports Delta > 0 only");
}

void check_entry(const LocalModel& lm, double xi, double eta) {
  if (!(xi > 0.0) || !(eta > 0.0) || xi > lm.zeta0 || eta > lm.zeta0 ||
      !std::isfinite(xi) || !std::isfinite(eta)) {
    std::ostringstream os;
    os << "entry point (" << xi << ", " << eta << ") outside the chart quadrant (0, "
       << lm.zeta0 << "]^2";
    fail(ErrorCode::domain, os.str());
  }
}

double power_tail(double A, double a, double lo, double hi) {
  // int_lo^hi A e^(a s) ds
  if (std::abs(a) < 1e-14) return A * (hi - lo);
  return A * (std::exp(a * hi) - std::exp(a * lo)) / a;
}

}  // namespace

LocalModel LocalModel::from(const FlowParams& p) {
  DerivedConstants dc = derive_constants(p);
  require_positive_delta(dc);
  return {dc, p.eps, p.w};
}

LevelCoords to_level(const DerivedConstants& dc, double x, double y) {
  if (!(x > 0.0) || !(y > 0.0)) fail(ErrorCode::domain, "level coordinates need x, y > 0");
  return {first_integral(dc, x, y), y / x};
}

double x_from_level(const DerivedConstants& dc, const LevelCoords& lc) {
  require_positive_delta(dc);
  const double lx = (std::log(lc.L) - dc.v * std::log(lc.M) -
                     std::log(dc.a0 / dc.v + dc.b2 * lc.M * lc.M / dc.u)) /
                    (dc.u + dc.v + 2.0);
  return std::exp(lx);
}

double m_integrand(const DerivedConstants& dc, double M) {
  return 1.0 / (std::pow(M, 1.0 - 1.0 / dc.beta0) * std::pow(dc.c0 + dc.c2 * M * M, dc.e));
}

double log_m_ds(const DerivedConstants& dc, double s) {
  return s / dc.beta0 - dc.e * log_c(dc, s);
}

double log_theta_ds(const DerivedConstants& dc, const HomogeneousSpec& th, double s) {
  return log_m_ds(dc, s) + 0.5 * th.rho * (-s / dc.beta0 - dc.g * log_c(dc, s)) +
         log_profile(th, s);
}

EndBehaviour m_ends(const DerivedConstants& dc) {
  return {std::pow(dc.c0, -dc.e), 1.0 / dc.beta0, std::pow(dc.c2, -dc.e), 1.0 / dc.beta};
}

EndBehaviour theta_ends(const DerivedConstants& dc, const HomogeneousSpec& th) {
  const double h = 0.5 * th.rho;
  const double cexp = -dc.e - dc.g * h;
  return {std::pow(th.px, h) * std::pow(dc.c0, cexp), (1.0 - h) / dc.beta0,
          std::pow(th.qy, h) * std::pow(dc.c2, cexp), (1.0 - h) / dc.beta};
}

double m_total(const DerivedConstants& dc) {
  auto f = [&](double s) { return std::exp(log_m_ds(dc, s)); };
  return integrate_adaptive(f, -std::numeric_limits<double>::infinity(),
                            std::numeric_limits<double>::infinity(), 1e-12, "m-integral")
      .value;
}

double m_total_closed(const DerivedConstants& dc) {
  const double p = 0.5 / dc.beta0, q = 0.5 / dc.beta;
  return 0.5 * std::pow(dc.c0, -q) * std::pow(dc.c2, -p) * boost::math::beta(p, q);
}

double log_G(const DerivedConstants& dc, double xi, double eta) {
  return std::log(xi) / dc.beta + std::log(eta) / dc.beta0 +
         dc.g * std::log(dc.c0 * xi * xi + dc.c2 * eta * eta);
}

double xi_zero(const DerivedConstants& dc, double eta) {
  if (!(eta > 0.0)) fail(ErrorCode::domain, "xi_zero needs eta > 0");
  return std::pow(dc.c2, -1.0 / dc.u) * std::pow(eta, -dc.a2 / dc.b2) *
         std::pow(m_total(dc), dc.beta);
}

double omega_zero(const DerivedConstants& dc, double zeta0, double eta) {
  const double x0 = xi_zero(dc, eta);
  const double lw = (dc.u * std::log(x0) + (dc.v + 2.0) * std::log(eta) +
                     std::log(dc.b2 * dc.v / (dc.a0 * dc.u)) - (dc.u + 2.0) * std::log(zeta0)) /
                    dc.v;
  return std::exp(lw);
}

double exit_omega(const DerivedConstants& dc, double zeta0, double xi, double eta) {
  if (xi == zeta0) return eta;
  const double lnL = dc.u * std::log(xi) + dc.v * std::log(eta) +
                     std::log(dc.a0 * xi * xi / dc.v + dc.b2 * eta * eta / dc.u);
  const double rhs = lnL - dc.u * std::log(zeta0);
  const double base = dc.a0 * zeta0 * zeta0 / dc.v;
  auto h = [&](double t) {
    return dc.v * t + std::log(base + dc.b2 * std::exp(2.0 * t) / dc.u) - rhs;
  };
  const double hi = (rhs - std::log(base)) / dc.v;
  double lo = (rhs - std::log(base + dc.b2 * std::exp(2.0 * hi) / dc.u)) / dc.v;
  if (h(hi) <= 0.0) return std::exp(hi);
  if (h(lo) >= 0.0) return std::exp(lo);
  return std::exp(solve_bracketed(h, lo, hi, 0.0, 1e-15, 200, "exit ordinate").x);
}

double theta_between(const DerivedConstants& dc, const HomogeneousSpec& th, double G,
                     double M_lo, double M_hi) {
  if (M_hi <= M_lo) return 0.0;
  auto f = [&](double s) { return std::exp(log_theta_ds(dc, th, s)); };
  const double I =
      integrate_adaptive(f, std::log(M_lo), std::log(M_hi), 1e-12, "theta integral").value;
  return th.scale * std::pow(G, 0.5 * th.rho - 1.0) * I;
}

PassageResult passage_time(const LocalModel& lm, double xi, double eta) {
  check_entry(lm, xi, eta);
  const auto& dc = lm.dc;
  PassageResult r;
  r.eta = eta;
  r.xi = xi;
  r.omega = exit_omega(dc, lm.zeta0, xi, eta);
  r.G = std::exp(log_G(dc, xi, eta));
  const double M0 = eta / xi, M1 = r.omega / lm.zeta0;
  if (M0 > M1) {
    auto f = [&](double s) { return std::exp(log_m_ds(dc, s)); };
    const double I =
        integrate_adaptive(f, std::log(M1), std::log(M0), 1e-12, "passage integral").value;
    r.T = I / r.G;
  }
  r.theta = theta_between(dc, lm.w, r.G, M1, M0);
  return r;
}

double min_passage_time(const LocalModel& lm, double eta) {
  return passage_time(lm, eta, eta).T;
}

ExitPoint exit_point(const LocalModel& lm, double eta, double T) {
  if (!(eta > 0.0) || eta > lm.zeta0) fail(ErrorCode::domain, "exit_point: eta outside (0, eps]");
  const double Tmin = min_passage_time(lm, eta);
  if (!(T >= Tmin * (1.0 - 1e-12)) || !std::isfinite(T)) {
    std::ostringstream os;
    os << "exit_point: T = " << T << " below the minimal passage time " << Tmin
       << " from height " << eta;
    fail(ErrorCode::domain, os.str());
  }
  if (T <= Tmin) return {eta, exit_omega(lm.dc, lm.zeta0, eta, eta)};
  const double lT = std::log(T);
  auto h = [&](double t) { return std::log(passage_time(lm, std::exp(t), eta).T) - lT; };
  double hi = std::log(eta);
  // at eta = zeta0 the passage from xi = eta is empty; step inside
  while (!std::isfinite(h(hi))) hi -= 1e-6;
  double lo = std::min(hi, std::log(xi_zero(lm.dc, eta)) - lm.dc.beta * lT) - 1.0;
  for (int k = 0; k < 60 && h(lo) < 0.0; ++k) lo -= 2.0;
  const double lx = solve_bracketed(h, lo, hi, 0.0, 1e-10, 200, "exit_point").x;
  const double xi = std::exp(lx);
  return {xi, exit_omega(lm.dc, lm.zeta0, xi, eta)};
}

double theta_integral(const LocalModel& lm, const HomogeneousSpec& th, double eta, double T) {
  validate_homogeneous(th, true);
  const ExitPoint ep = exit_point(lm, eta, T);
  const double G = std::exp(log_G(lm.dc, ep.xi, eta));
  return theta_between(lm.dc, th, G, ep.omega / lm.zeta0, eta / ep.xi);
}

const char* regime_name(ThetaRegime r) {
  switch (r) {
    case ThetaRegime::sub2: return "sub2";
    case ThetaRegime::crit2: return "crit2";
    case ThetaRegime::super2: return "super2";
  }
  return "?";
}

double ThetaAsymptotics::predict(double T) const {
  switch (regime) {
    case ThetaRegime::sub2: return C_rho * std::pow(T, exponent);
    case ThetaRegime::crit2: return C_rho * std::log(T);
    case ThetaRegime::super2: return C_rho;
  }
  return NAN;
}

ThetaAsymptotics theta_asymptotic_constant(const DerivedConstants& dc, double zeta0,
                                           const HomogeneousSpec& th, double eta) {
  validate_homogeneous(th, true);
  const double h = 0.5 * th.rho;
  const double x0 = xi_zero(dc, eta);
  const double lG0 = dc.g * std::log(dc.c2) + std::log(x0) / dc.beta +
                     (2.0 - 1.0 / dc.beta) * std::log(eta);
  const EndBehaviour ends = theta_ends(dc, th);
  ThetaAsymptotics out{};
  out.exponent = 1.0 - h;
  if (std::abs(th.rho - 2.0) < 1e-12) {
    out.regime = ThetaRegime::crit2;
    // each end contributes its own coefficient times its own log rate
    out.C_rho = th.scale * (dc.beta0 * ends.A + dc.beta * ends.B);
  } else if (th.rho < 2.0) {
    out.regime = ThetaRegime::sub2;
    auto f = [&](double s) { return std::exp(log_theta_ds(dc, th, s)); };
    const double Cstar = integrate_adaptive(f, -std::numeric_limits<double>::infinity(),
                                            std::numeric_limits<double>::infinity(), 1e-12,
                                            "theta constant")
                             .value;
    out.C_rho = th.scale * std::exp((h - 1.0) * lG0) * Cstar;
  } else {
    out.regime = ThetaRegime::super2;
    const double a = h - 1.0;
    const double w0 = omega_zero(dc, zeta0, eta);
    out.C_rho = th.scale * std::exp(a * lG0) / a *
                (dc.beta0 * ends.A * std::pow(zeta0 / w0, a / dc.beta0) +
                 dc.beta * ends.B * std::pow(eta / x0, a / dc.beta));
  }
  return out;
}

CumulativeTable::CumulativeTable(std::function<double(double)> f, EndBehaviour ends,
                                 double s_min, double s_max, double h)
    : f_(std::move(f)), ends_(ends), s_min_(s_min), s_max_(s_max), h_(h) {
  const auto n = static_cast<std::size_t>(std::llround((s_max - s_min) / h));
  h_ = (s_max - s_min) / static_cast<double>(n);
  F_.assign(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = s_min_ + h_ * static_cast<double>(i);
    F_[i + 1] = F_[i] + integrate_panel(f_, a, a + h_);
  }
}

double CumulativeTable::operator()(double s) const {
  if (s <= s_min_) return -power_tail(ends_.A, ends_.a, s, s_min_);
  if (s >= s_max_) return F_.back() + power_tail(ends_.B, -ends_.b, s_max_, s);
  auto i = static_cast<std::size_t>((s - s_min_) / h_);
  i = std::min(i, F_.size() - 2);
  const double a = s_min_ + h_ * static_cast<double>(i);
  return F_[i] + integrate_panel(f_, a, s);
}

double CumulativeTable::inverse(double target) const {
  if (target <= 0.0) {
    // solve A (e^(a s_min) - e^(a s)) / a = -target
    if (std::abs(ends_.a) < 1e-14) return s_min_ + target / ends_.A;
    const double arg = std::exp(ends_.a * s_min_) + ends_.a * target / ends_.A;
    if (arg <= 0.0) return -std::numeric_limits<double>::infinity();
    return std::log(arg) / ends_.a;
  }
  if (target >= F_.back()) {
    const double d = target - F_.back();
    if (std::abs(ends_.b) < 1e-14) return s_max_ + d / ends_.B;
    const double arg = std::exp(-ends_.b * s_max_) - ends_.b * d / ends_.B;
    if (arg <= 0.0) return std::numeric_limits<double>::infinity();
    return -std::log(arg) / ends_.b;
  }
  auto it = std::upper_bound(F_.begin(), F_.end(), target);
  const auto i = static_cast<std::size_t>(it - F_.begin()) - 1;
  const double a = s_min_ + h_ * static_cast<double>(i);
  auto g = [&](double s) { return F_[i] + integrate_panel(f_, a, s) - target; };
  return solve_bracketed(g, a, a + h_, 0.0, 1e-14, 200, "table inverse").x;
}

PassageTable::PassageTable(const LocalModel& lm, const HomogeneousSpec& psi_term)
    : lm_(lm),
      psi_(psi_term),
      m_([dc = lm.dc](double s) { return std::exp(log_m_ds(dc, s)); }, m_ends(lm.dc)),
      tw_(
          [dc = lm.dc, th = lm.w](double s) { return std::exp(log_theta_ds(dc, th, s)); },
          theta_ends(lm.dc, lm.w)),
      tp_(
          [dc = lm.dc, th = psi_term](double s) { return std::exp(log_theta_ds(dc, th, s)); },
          theta_ends(lm.dc, psi_term)) {}

FastPassage PassageTable::passage(double xi, double eta) const {
  check_entry(lm_, xi, eta);
  const auto& dc = lm_.dc;
  FastPassage fp;
  fp.omega = exit_omega(dc, lm_.zeta0, xi, eta);
  fp.logG = log_G(dc, xi, eta);
  fp.M0 = eta / xi;
  fp.M1 = fp.omega / lm_.zeta0;
  const double s0 = std::log(fp.M0), s1 = std::log(fp.M1);
  fp.phi_m0 = m_(s0);
  fp.phi_w0 = tw_(s0);
  fp.phi_p0 = tp_(s0);
  if (s0 > s1) {
    const double G = std::exp(fp.logG);
    fp.T = (fp.phi_m0 - m_(s1)) / G;
    fp.theta_w = lm_.w.scale * std::exp((0.5 * lm_.w.rho - 1.0) * fp.logG) * (fp.phi_w0 - tw_(s1));
    fp.theta_psi =
        psi_.scale * std::exp((0.5 * psi_.rho - 1.0) * fp.logG) * (fp.phi_p0 - tp_(s1));
  }
  return fp;
}

PassageTable::Partial PassageTable::partial(const FastPassage& fp, double t) const {
  const auto& dc = lm_.dc;
  const double G = std::exp(fp.logG);
  double s = std::log(fp.M0);
  if (t > 0.0) s = std::min(s, std::max(m_.inverse(fp.phi_m0 - G * t), std::log(fp.M1)));
  const double M = std::exp(s);
  const double x = std::sqrt(G) * std::exp(-0.5 * s / dc.beta0 - 0.5 * dc.g * log_c(dc, s));
  Partial out;
  out.x = x;
  out.y = M * x;
  out.theta_w = lm_.w.scale * std::exp((0.5 * lm_.w.rho - 1.0) * fp.logG) * (fp.phi_w0 - tw_(s));
  out.theta_psi = psi_.scale * std::exp((0.5 * psi_.rho - 1.0) * fp.logG) * (fp.phi_p0 - tp_(s));
  return out;
}

}  // namespace aaf
