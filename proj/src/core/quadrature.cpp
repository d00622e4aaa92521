#include "quadrature.hpp"

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/tools/roots.hpp>
#include <boost/math/tools/toms748_solve.hpp>
#include <cmath>
#include <limits>
#include <sstream>

#include "error.hpp"

namespace aaf {

namespace {

// The embedded-rule error estimates are pessimistic by orders of magnitude on
// converged panels, so only a gross miss is treated as a failure.
constexpr double kGrossMiss = 1e4;
constexpr double kRoundoffFloor = 1e-13;

void check_quad(const char* what, double value, double err, double rel_tol) {
  if (!std::isfinite(value) ||
      err > std::max(kGrossMiss * rel_tol * std::abs(value), kRoundoffFloor)) {
    std::ostringstream os;
    os << what << ": quadrature tolerance unmet (value " << value << ", error bound " << err
       << ", requested relative " << rel_tol << ")";
    fail(ErrorCode::quadrature, os.str());
  }
}

}  // namespace

QuadResult integrate_adaptive(const std::function<double(double)>& f, double a, double b,
                              double rel_tol, const char* what) {
  double err = 0.0, value = 0.0;
  if (std::isfinite(a) && std::isfinite(b)) {
    // map to [0, 1] so the rule's unit-scale error test is meaningful
    const double w = b - a;
    auto g = [&](double t) { return w * f(a + w * t); };
    value = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(g, 0.0, 1.0, 15,
                                                                          rel_tol, &err);
  } else {
    value = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 15, rel_tol,
                                                                          &err);
  }
  check_quad(what, value, err, rel_tol);
  return {value, err};
}

QuadResult integrate_tanh_sinh(const std::function<double(double)>& f, double a, double b,
                               double rel_tol, const char* what) {
  thread_local boost::math::quadrature::tanh_sinh<double> rule(15);
  double err = 0.0, l1 = 0.0;
  auto g = [&f](double x) { return f(x); };
  double value = rule.integrate(g, a, b, rel_tol, &err, &l1);
  check_quad(what, value, err, rel_tol);
  return {value, err};
}

double integrate_panel(const std::function<double(double)>& f, double a, double b) {
  return boost::math::quadrature::gauss<double, 10>::integrate(f, a, b);
}

RootResult solve_bracketed(const std::function<double(double)>& f, double lo, double hi,
                           double rel_tol, double abs_tol, int max_iter, const char* what) {
  double flo = f(lo), fhi = f(hi);
  if (flo == 0.0) return {lo, 1};
  if (fhi == 0.0) return {hi, 1};
  if (std::isnan(flo) || std::isnan(fhi) || (flo > 0.0) == (fhi > 0.0)) {
    std::ostringstream os;
    os << what << ": root not bracketed on [" << lo << ", " << hi << "] (f = " << flo << ", "
       << fhi << ")";
    fail(ErrorCode::root_not_bracketed, os.str());
  }
  auto done = [&](double a, double b) {
    const double w = std::abs(b - a);
    return w <= rel_tol * std::min(std::abs(a), std::abs(b)) + abs_tol ||
           w <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(a), std::abs(b));
  };
  std::uintmax_t iters = static_cast<std::uintmax_t>(max_iter);
  auto bracket = boost::math::tools::toms748_solve(f, lo, hi, flo, fhi, done, iters);
  const double x = 0.5 * (bracket.first + bracket.second);
  if (!done(bracket.first, bracket.second) && f(bracket.first) != 0.0 &&
      f(bracket.second) != 0.0) {
    std::ostringstream os;
    os << what << ": no convergence after " << max_iter << " iterations, bracket ["
       << bracket.first << ", " << bracket.second << "]";
    fail(ErrorCode::no_convergence, os.str());
  }
  return {x, static_cast<int>(iters)};
}

}  // namespace aaf
