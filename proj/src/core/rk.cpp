#include "rk.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "error.hpp"
#include "numfmt.hpp"
#include "quadrature.hpp"

namespace aaf {

namespace {

constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                 a64 = 49.0 / 176, a65 = -5103.0 / 18656;
constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192,
                 a75 = -2187.0 / 6784, a76 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                 e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

RkState axpy(const RkState& y, double h, std::initializer_list<std::pair<double, const RkState*>> terms) {
  RkState out = y;
  for (std::size_t i = 0; i < out.size(); ++i) {
    double acc = 0.0;
    for (const auto& [c, k] : terms) acc += c * (*k)[i];
    out[i] += h * acc;
  }
  return out;
}

RkState hermite(const RkState& y0, const RkState& f0, const RkState& y1, const RkState& f1,
                double h, double th) {
  RkState out;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double d = y1[i] - y0[i];
    out[i] = (1 - th) * y0[i] + th * y1[i] +
             th * (th - 1) * ((1 - 2 * th) * d + (th - 1) * h * f0[i] + th * h * f1[i]);
  }
  return out;
}

}  // namespace

RkRun dopri5(const RkRhs& f, double t0, const RkState& y0, double t_end, const RkOptions& opt,
             const std::vector<RkEvent>& events,
             const std::function<void(double, const RkState&)>& observer) {
  if (!(opt.tol > 0.0)) fail(ErrorCode::invalid_argument, "RK tolerance must be positive");
  const double dir = t_end >= t0 ? 1.0 : -1.0;
  RkRun run;
  run.t = t0;
  run.y = y0;
  if (t_end == t0) return run;

  std::vector<double> gprev(events.size());
  std::vector<bool> fired(events.size(), false);
  for (std::size_t k = 0; k < events.size(); ++k) gprev[k] = events[k].g(t0, y0);

  RkState k1 = f(t0, y0);
  double h = std::min(opt.h0, std::abs(t_end - t0));
  double err_prev = 1.0;
  if (observer) observer(run.t, run.y);

  while (dir * (t_end - run.t) > 0.0) {
    if (run.steps + run.rejected >= opt.max_steps)
      fail(ErrorCode::no_convergence, "RK step budget exhausted at t = " + fmt_double(run.t));
    h = std::min({h, opt.h_max, std::abs(t_end - run.t)});
    const double hs = dir * h;
    const double t = run.t;
    const RkState& y = run.y;
    RkState k2 = f(t + c2 * hs, axpy(y, hs, {{a21, &k1}}));
    RkState k3 = f(t + c3 * hs, axpy(y, hs, {{a31, &k1}, {a32, &k2}}));
    RkState k4 = f(t + c4 * hs, axpy(y, hs, {{a41, &k1}, {a42, &k2}, {a43, &k3}}));
    RkState k5 = f(t + c5 * hs, axpy(y, hs, {{a51, &k1}, {a52, &k2}, {a53, &k3}, {a54, &k4}}));
    RkState k6 = f(t + hs,
                   axpy(y, hs, {{a61, &k1}, {a62, &k2}, {a63, &k3}, {a64, &k4}, {a65, &k5}}));
    RkState y1 =
        axpy(y, hs, {{a71, &k1}, {a73, &k3}, {a74, &k4}, {a75, &k5}, {a76, &k6}});
    RkState k7 = f(t + hs, y1);

    double err = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double ei = hs * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] +
                              e7 * k7[i]);
      const double sc = opt.tol * h * (1.0 + std::max(std::abs(y[i]), std::abs(y1[i])));
      err = std::max(err, std::abs(ei) / sc);
    }
    if (!std::isfinite(err)) err = 1e10;

    if (err > 1.0) {
      ++run.rejected;
      h *= std::max(0.2, 0.9 * std::pow(err, -0.25));
      if (h < opt.h_min) {
        std::ostringstream os;
        os << "RK step-size underflow at t = " << t << ", state (" << y[0] << ", " << y[1]
           << ", " << y[2] << ")";
        fail(ErrorCode::step_underflow, os.str());
      }
      continue;
    }

    // accepted: locate events on the interpolant
    double t_stop = t + hs;
    RkState y_stop = y1;
    bool stop = false;
    for (std::size_t k = 0; k < events.size(); ++k) {
      if (fired[k]) continue;
      const double gnew = events[k].g(t + hs, y1);
      if ((gprev[k] < 0.0 && gnew >= 0.0) || (gprev[k] > 0.0 && gnew <= 0.0)) {
        auto gk = [&](double th) {
          return events[k].g(t + th * hs, hermite(y, k1, y1, k7, hs, th));
        };
        double th = 1.0;
        if (gnew != 0.0) th = solve_bracketed(gk, 0.0, 1.0, 0.0, 1e-15, 200, "RK event").x;
        RkHit hit{events[k].name, t + th * hs, hermite(y, k1, y1, k7, hs, th)};
        fired[k] = true;
        run.hits.push_back(hit);
        if (events[k].terminal && dir * (hit.t - t_stop) < 0.0) {
          t_stop = hit.t;
          y_stop = hit.y;
          stop = true;
        }
      }
      gprev[k] = gnew;
    }
    ++run.steps;
    run.t = t_stop;
    run.y = y_stop;
    if (observer) observer(run.t, run.y);
    if (stop) {
      run.stopped_by_event = true;
      // drop hits located after the terminal one
      std::erase_if(run.hits, [&](const RkHit& hh) { return dir * (hh.t - t_stop) > 0.0; });
      break;
    }
    k1 = k7;
    const double fac = 0.9 * std::pow(std::max(err, 1e-10), -0.7 / 4) * std::pow(err_prev, 0.4 / 4);
    h *= std::clamp(fac, 0.2, 5.0);
    err_prev = std::max(err, 1e-4);
  }
  return run;
}

RkOrbit rk_orbit(const FlowParams& p, const std::array<double, 3>& q0, double t_end, double tol,
                 const std::vector<double>& y_levels, const HomogeneousSpec* extra,
                 bool stop_at_exit) {
  const double lim = p.eps * (1.0 + 1e-12);
  if (std::abs(q0[0]) > lim || std::abs(q0[1]) > lim)
    fail(ErrorCode::domain, "rk_orbit: start point outside the chart");
  RkRhs rhs = [&](double t, const RkState& y) {
    const auto v = vector_field(p, y[0], y[1], y[2]);
    (void)t;
    return RkState{v[0], v[1], v[2], extra ? homogeneous_eval(*extra, y[0], y[1]) : 0.0};
  };
  std::vector<RkEvent> ev;
  const double zeta0 = p.eps;
  ev.push_back({"exit", [zeta0](double, const RkState& y) { return std::abs(y[0]) - zeta0; },
                stop_at_exit});
  for (double lv : y_levels)
    ev.push_back({"y=" + fmt_double(lv),
                  [lv](double, const RkState& y) { return std::abs(y[1]) - lv; }, false});
  RkOptions opt;
  opt.tol = tol;
  RkOrbit out;
  out.run = dopri5(rhs, 0.0, {q0[0], q0[1], q0[2], 0.0}, t_end, opt, ev,
                   [&](double t, const RkState& y) { out.samples.push_back({t, y}); });
  out.hits = out.run.hits;
  return out;
}

}  // namespace aaf
