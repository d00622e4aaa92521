#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "error.hpp"
#include "flow_sim.hpp"
#include "model.hpp"
#include "stable.hpp"
#include "statistics.hpp"

using namespace aaf;

namespace {

// Chambers-Mallows-Stuck sampler for the totally right-skewed law in the
// parameterization of StableSpec.
double cms_variate(const StableSpec& s, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(-std::numbers::pi / 2, std::numbers::pi / 2);
  std::exponential_distribution<double> E(1.0);
  const double a = s.alpha, V = U(rng), W = E(rng);
  const double t = std::tan(std::numbers::pi * a / 2);
  const double B = std::atan(t) / a;
  const double S = std::pow(1 + t * t, 1 / (2 * a));
  const double X = S * std::sin(a * (V + B)) / std::pow(std::cos(V), 1 / a) *
                   std::pow(std::cos(V - a * (V + B)) / W, (1 - a) / a);
  return s.scale * X + s.location;
}

}  // namespace

TEST_CASE("Hill estimator on exact Pareto samples") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::vector<double> x(1'000'000);
  for (double& v : x) v = std::pow(1.0 - U(rng), -1.0 / 1.5);
  const TailFit h = tail_fit(x, TailMethod::hill, 0.02);
  CHECK(std::abs(h.beta_hat - 1.5) < 0.03);
  const TailFit l = tail_fit(x, TailMethod::loglog, 0.02);
  CHECK(std::abs(l.beta_hat - 1.5) < 0.05);
  CHECK(l.c_hat == doctest::Approx(1.0).epsilon(0.2));
}

TEST_CASE("Hill estimator rejects light tails by drifting upward") {
  std::mt19937_64 rng(22);
  std::exponential_distribution<double> E(1.0);
  std::vector<double> x(1'000'000);
  for (double& v : x) v = E(rng);
  double prev = 0;
  for (double kf : {0.1, 0.01, 0.001, 0.0001}) {
    const double b = tail_fit(x, TailMethod::hill, kf).beta_hat;
    CHECK(b > prev);
    prev = b;
  }
}

TEST_CASE("tail_fit argument checks") {
  std::vector<double> small(100, 1.0);
  CHECK_THROWS_AS(tail_fit(small, TailMethod::hill, 0.01), Error);
  std::vector<double> x(20'000, 2.0);
  CHECK_THROWS_AS(tail_fit(x, TailMethod::hill, 0.5), Error);
}

TEST_CASE("survival curve is strictly decreasing") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::vector<double> x(100'000);
  for (double& v : x) v = std::floor(std::pow(1.0 - U(rng), -1.0 / 2.0));  // ties on purpose
  const auto c = survival_curve(x, 80);
  REQUIRE(c.size() > 5);
  for (std::size_t i = 1; i < c.size(); ++i) CHECK(c[i].second < c[i - 1].second);
}

TEST_CASE("normalizing sequences") {
  CHECK(normalizer_b(1e6, LimitCase::stable, 1.5, 1.0, 1.0) == doctest::Approx(1e4).epsilon(1e-12));
  CHECK(normalizer_b(std::numbers::e, LimitCase::nonstd_clt, 2.0, 1.0, 1.0) ==
        doctest::Approx(std::sqrt(std::numbers::e)).epsilon(1e-12));
  CHECK(normalizer_b(1234.0, LimitCase::clt, 3.0, 1.0, 7.0) == doctest::Approx(std::sqrt(1234.0)).epsilon(1e-12));
  CHECK(admissible_case(1.5, 1.0) == LimitCase::stable);
  CHECK(admissible_case(2.0, 1.0) == LimitCase::nonstd_clt);
  CHECK(admissible_case(3.0, 1.0) == LimitCase::clt);
}

TEST_CASE("stable CDF: Gaussian reduction and monotonicity") {
  const StableSpec g{2.0, 1.0 / std::sqrt(2.0), 0.0};
  for (double x : {-1.0, 0.0, 1.0}) CHECK(std::abs(stable_cdf(g, x) - normal_cdf(x)) < 1e-6);
  const StableSpec s{1.5, 1.0, 0.0};
  double prev = 0;
  for (int i = 0; i <= 1000; ++i) {
    const double x = -20 + 40.0 * i / 1000;
    const double F = stable_cdf(s, x);
    CHECK(F >= prev - 1e-9);
    // skew +1: the left tail underflows, so positivity only near the bulk
    if (x > -3) CHECK(F > 0);
    CHECK(F < 1);
    prev = F;
  }
}

TEST_CASE("stable median against exact sampling") {
  const StableSpec s{1.5, 1.3, 0.4};
  std::mt19937_64 rng(24);
  std::vector<double> x(1'000'000);
  for (double& v : x) v = cms_variate(s, rng);
  std::nth_element(x.begin(), x.begin() + 500'000, x.end());
  CHECK(std::abs(x[500'000] - stable_quantile(s, 0.5)) < 1e-2);
  // and the tabulated CDF agrees with the inversion
  const StableCdfTable t(1.5);
  for (double z : {-3.0, -1.0, 0.0, 0.7, 4.0, 30.0})
    CHECK(std::abs(t(z) - stable_cdf({1.5, 1.0, 0.0}, z)) < 1e-6);
}

TEST_CASE("Green-Kubo on synthetic series") {
  std::mt19937_64 rng(25);
  std::normal_distribution<double> N(0.0, 1.0);
  std::vector<double> iid(1'000'000), ar(1'000'000);
  for (double& v : iid) v = std::sqrt(2.0) * N(rng);
  double prev = 0;
  for (double& v : ar) v = prev = 0.5 * prev + N(rng);
  CHECK(std::abs(variance_estimate(iid, 1.0).sigma2_map - 2.0) < 0.05);
  CHECK(std::abs(variance_estimate(ar, 1.0).sigma2_map / 4.0 - 1) < 0.03);
  // streaming folds give the same estimate
  LaggedMoments a(200), b(200);
  for (std::size_t i = 0; i < ar.size(); ++i) (i < ar.size() / 2 ? a : b).add(ar[i], 0.0);
  CHECK(std::abs(variance_estimate(a, b, 0.0, 1.0).sigma2_map / 4.0 - 1) < 0.03);
  // flow clock divides by tau*
  CHECK(variance_estimate(ar, 2.0).sigma2 ==
        doctest::Approx(variance_estimate(ar, 1.0).sigma2_map / 2.0).epsilon(1e-12));
}

TEST_CASE("constant potential gives a degenerate limit sample") {
  FlowParams p = preset("P_CLT");
  // constant flow density and nothing else: psi_T = 0.7 T exactly
  p.psi.offset = 0.0;
  p.psi.scale = 0.0;
  p.psi.flat = 0.7;
  const HybridSystem sys(p);
  LimitOptions o;
  o.kind = LimitCase::clt;
  o.T_flow = 200;
  o.n_samples = 50;
  o.n_centering = 100'000;
  const LimitReport r = limit_experiment(sys, o);
  CHECK(r.degenerate);
  CHECK_FALSE(r.pass);
}
