#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "model.hpp"

namespace aaf {

using RkState = std::array<double, 4>;
using RkRhs = std::function<RkState(double t, const RkState& y)>;

struct RkOptions {
  double tol = 1e-10;  // local error per unit time, mixed absolute/relative
  double h0 = 1e-2;
  double h_min = 1e-12;
  double h_max = std::numeric_limits<double>::infinity();
  std::size_t max_steps = 50'000'000;
};

struct RkEvent {
  std::string name;
  std::function<double(double t, const RkState& y)> g;
  bool terminal = false;
};

struct RkHit {
  std::string name;
  double t;
  RkState y;
};

struct RkSample {
  double t;
  RkState y;
};

struct RkRun {
  double t;
  RkState y;
  std::size_t steps = 0;
  std::size_t rejected = 0;
  std::vector<RkHit> hits;       // first crossing of every event
  bool stopped_by_event = false;
};

// Dormand-Prince 5(4) with PI step control. Integrates forward or backward
// (t_end < t0). Events are located on the cubic Hermite interpolant and
// reported on their first sign change only. `observer` sees every accepted step.
RkRun dopri5(const RkRhs& f, double t0, const RkState& y0, double t_end, const RkOptions& opt,
             const std::vector<RkEvent>& events = {},
             const std::function<void(double, const RkState&)>& observer = {});

struct RkOrbit {
  std::vector<RkSample> samples;  // (t, x, y, z, extra)
  std::vector<RkHit> hits;
  RkRun run;
};

// Brute-force integration of the local vector field. The fourth state
// component accumulates the integral of `extra` (zero spec scale = none).
// Events: "exit" at x = zeta0 (terminal) and "y=<level>" for each y level.
RkOrbit rk_orbit(const FlowParams& p, const std::array<double, 3>& q0, double t_end, double tol,
                 const std::vector<double>& y_levels = {},
                 const HomogeneousSpec* extra = nullptr, bool stop_at_exit = true);

}  // namespace aaf
