#pragma once

#include <cstdint>
#include <functional>
#include <string>

namespace aaf {

struct QuadResult {
  double value;
  double error;  // estimated absolute error
};

// Adaptive Gauss-Kronrod (31 points) on a finite or infinite interval.
// Throws ErrorCode::quadrature when the requested relative tolerance is not met;
// the message carries the achieved bound.
QuadResult integrate_adaptive(const std::function<double(double)>& f, double a, double b,
                              double rel_tol = 1e-12, const char* what = "integral");

// Double-exponential rule, tolerant of integrable endpoint singularities.
QuadResult integrate_tanh_sinh(const std::function<double(double)>& f, double a, double b,
                               double rel_tol = 1e-12, const char* what = "integral");

// Fixed 10-point Gauss-Legendre panel.
double integrate_panel(const std::function<double(double)>& f, double a, double b);

struct RootResult {
  double x;
  int iterations;
};

// Bracketed root of a continuous function with f(lo), f(hi) of opposite sign.
// Stops when the bracket width is below rel_tol * |x| (+abs_tol) or after
// max_iter evaluations; the latter throws ErrorCode::no_convergence.
RootResult solve_bracketed(const std::function<double(double)>& f, double lo, double hi,
                           double rel_tol = 1e-10, double abs_tol = 0.0, int max_iter = 200,
                           const char* what = "root");

}  // namespace aaf
