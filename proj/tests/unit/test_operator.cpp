#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "flow_sim.hpp"
#include "model.hpp"
#include "operator.hpp"

using namespace aaf;

namespace {

const HybridSystem& stable_sys() {
  static const HybridSystem s(preset("P_STABLE"));
  return s;
}

UlamOptions small_options(unsigned threads = 1) {
  UlamOptions o;
  o.resolution = 32;
  o.samples_per_box = 64;
  o.strip_samples = 1 << 16;
  o.threads = threads;
  return o;
}

const UlamBase& small_base() {
  static const UlamBase b = build_ulam(stable_sys(), small_options());
  return b;
}

// Two-state chain [[0.9, 0.1], [0.2, 0.8]] with tau = 1 and psi = 0.
UlamBase two_state() {
  UlamBase b;
  b.resolution = 1;
  b.box_of = {0, 1};
  b.active = {0, 1};
  b.mass = {0.5, 0.5};
  b.row_ptr = {0, 2, 4};
  b.col = {0, 1, 0, 1};
  b.prob = {0.9, 0.1, 0.2, 0.8};
  b.tau = {1, 1, 1, 1};
  b.psi = {0, 0, 0, 0};
  b.row_of_ = {0, 0, 1, 1};
  b.col_ptr = {0, 2, 4};
  b.perm = {0, 2, 1, 3};
  return b;
}

}  // namespace

TEST_CASE("hand-built two-state chain") {
  const UlamBase b = two_state();
  const EigenResult e = leading_eigen(twist(b, 0, 0), 1e-14, true);
  CHECK(e.lambda == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(e.left_vec[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-10));
  CHECK(e.left_vec[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-10));
  CHECK(e.lambda_left == doctest::Approx(e.lambda).epsilon(1e-12));
  // constant tau = 1: lambda(u) = exp(-u) exactly
  CHECK(leading_eigen(twist(b, 0.3, 0)).lambda == doctest::Approx(std::exp(-0.3)).epsilon(1e-12));
}

TEST_CASE("Ulam matrix is stochastic and has leading eigenvalue 1") {
  const UlamBase& b = small_base();
  for (std::size_t i = 0; i < b.size(); ++i) {
    double s = 0;
    for (std::uint64_t k = b.row_ptr[i]; k < b.row_ptr[i + 1]; ++k) s += b.prob[k];
    CHECK(std::abs(s - 1) < 1e-10);
  }
  CHECK(std::abs(leading_eigen(twist(b, 0, 0)).lambda - 1) < 1e-8);
  CHECK(b.leaked_mass < 1e-3);
}

TEST_CASE("twisting") {
  const UlamBase& b = small_base();
  const TwistedOperator t0 = twist(b, 0, 0);
  CHECK(t0.w == b.prob);
  for (double u : {1e-3, 0.1, 1.0, 10.0}) {
    const TwistedOperator lin = twist(b, u, 0.01, false), lg = twist(b, u, 0.01, true);
    for (std::size_t k = 0; k < lin.w.size(); k += 97)
      CHECK(std::abs(lin.w[k] - lg.w[k]) <= 1e-12 * std::max(1e-300, lin.w[k]) + 1e-300);
  }
}

TEST_CASE("lambda(u) decreases and stays below exp(-u)") {
  const UlamBase& b = small_base();
  double prev = 1.0;
  for (double u = 0.01; u <= 1.0 + 1e-12; u += 0.07) {
    const EigenResult e = leading_eigen(twist(b, u, 0), 1e-13, true);
    CHECK(e.lambda < prev);
    CHECK(e.lambda <= std::exp(-u) + 1e-10);
    CHECK(e.lambda_left == doctest::Approx(e.lambda).epsilon(1e-10));
    prev = e.lambda;
  }
}

TEST_CASE("left eigenvector matches the SRB box histogram") {
  const UlamBase& b = small_base();
  const UlamMeans m = ulam_means(b);
  std::vector<double> hist(b.size(), 0.0);
  srb_stream(stable_sys(), 4, 10'000, 1'000'000, [&](const ReturnRecord& r) {
    const int i = b.box_index(r.start);
    if (i >= 0) hist[static_cast<std::size_t>(i)] += 1;
  });
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    dot += hist[i] * m.stationary[i];
    na += hist[i] * hist[i];
    nb += m.stationary[i] * m.stationary[i];
  }
  CHECK(dot / std::sqrt(na * nb) > 0.99);
}

TEST_CASE("induced pressure") {
  const UlamBase& b = small_base();
  const UlamMeans m = ulam_means(b);
  CHECK(std::abs(pressure_induced(b, 0.0)) < 1e-10);
  // s >= 0 only: one-sided slope
  const double h = 1e-6;
  CHECK(pressure_induced(b, h) / h == doctest::Approx(m.psi_hat).epsilon(1e-3));
  std::vector<double> P;
  for (int i = 0; i <= 8; ++i) P.push_back(pressure_induced(b, 0.005 * i));
  for (std::size_t i = 1; i + 1 < P.size(); ++i) CHECK(P[i + 1] - 2 * P[i] + P[i - 1] >= -1e-10);
}

TEST_CASE("flow pressure root") {
  const UlamBase& b = small_base();
  CHECK(pressure_flow(b, 0.0) == 0.0);
  double prev = 0;
  for (double s : {1e-4, 1e-3, 1e-2}) {
    const double u0 = pressure_flow(b, s);
    CHECK(u0 > prev);
    CHECK(std::abs(leading_eigen(twist(b, u0, s), 1e-14).lambda - 1) < 1e-10);
    prev = u0;
  }
}

TEST_CASE("eigenvalues do not depend on the thread count") {
  const UlamBase b3 = build_ulam(stable_sys(), small_options(3));
  const UlamBase& b1 = small_base();
  REQUIRE(b1.nnz() == b3.nnz());
  const double l1 = leading_eigen(twist(b1, 1e-3, 1e-3, false, 1), 1e-14).lambda;
  const double l3 = leading_eigen(twist(b3, 1e-3, 1e-3, false, 3), 1e-14).lambda;
  CHECK(std::abs(l1 - l3) <= 1e-12);
}
