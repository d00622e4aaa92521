#pragma once

#include <functional>
#include <vector>

namespace aaf {

// Totally right-skewed alpha-stable law in the S1 parameterization:
//   E exp(itX) = exp(-|scale t|^alpha (1 - i sign(t) tan(pi alpha / 2)) + i location t),
// so location is the mean for alpha > 1. alpha = 2 is N(location, 2 scale^2).
struct StableSpec {
  double alpha = 1.5;
  double scale = 1.0;
  double location = 0.0;
  static constexpr double skew = 1.0;
};

void validate_stable(const StableSpec& s);

// CDF by Gil-Pelaez inversion of the characteristic function, absolute error
// below 1e-6.
double stable_cdf(const StableSpec& s, double x);
double stable_pdf(const StableSpec& s, double x);
double stable_quantile(const StableSpec& s, double p);

// Standardized CDF for one alpha, tabulated with its density and interpolated
// by cubic Hermite; power-law asymptote beyond the right end of the table.
class StableCdfTable {
public:
  explicit StableCdfTable(double alpha);
  double operator()(double z) const;
  double alpha() const { return alpha_; }

private:
  double alpha_;
  std::vector<double> u_, z_, F_, f_;  // z = a sinh(u) grid
};

double normal_cdf(double x, double mean = 0.0, double sd = 1.0);

// Kolmogorov-Smirnov distance between the empirical law of `sorted`
// (ascending) and a continuous CDF.
double ks_distance(const std::vector<double>& sorted, const std::function<double(double)>& cdf);
// Cramer-von Mises statistic (n * omega^2).
double cvm_statistic(const std::vector<double>& sorted, const std::function<double(double)>& cdf);

struct StableFit {
  StableSpec spec;
  double ks = 0;
  double cvm = 0;
};

// Minimum Cramer-von Mises fit of (alpha, scale, location) with skew fixed at
// +1; alpha is searched in [alpha_lo, 2].
StableFit fit_stable(const std::vector<double>& sorted, double alpha_lo = 1.1);

}  // namespace aaf
