#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "error.hpp"
#include "model.hpp"

using namespace aaf;

namespace {

FlowParams coeffs(double a0, double b0, double a2, double b2) {
  FlowParams p;
  p.a0 = a0;
  p.b0 = b0;
  p.a2 = a2;
  p.b2 = b2;
  return p;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode{};
}

}  // namespace

TEST_CASE("derived constants of the three presets") {
  struct Row {
    double a2, delta, u, v, beta0, beta;
  };
  for (const Row& r : {Row{2, 1, 4, 6, 1, 1.5}, Row{3, 2, 2, 4, 1, 2}, Row{5, 4, 1, 3, 1, 3}}) {
    const DerivedConstants d = derive_constants(coeffs(1, 1, r.a2, 1));
    CHECK(d.delta == doctest::Approx(r.delta).epsilon(1e-14));
    CHECK(d.u == doctest::Approx(r.u).epsilon(1e-14));
    CHECK(d.v == doctest::Approx(r.v).epsilon(1e-14));
    CHECK(d.beta0 == doctest::Approx(r.beta0).epsilon(1e-14));
    CHECK(d.beta == doctest::Approx(r.beta).epsilon(1e-14));
  }
  CHECK(derive_constants(preset("P_STABLE")).beta == 1.5);
  CHECK(derive_constants(preset("P_BOUNDARY")).beta == 2.0);
  CHECK(derive_constants(preset("P_CLT")).beta == 3.0);
}

TEST_CASE("linear-system identities on random admissible draws") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> U(0.2, 3.0);
  int tested = 0;
  while (tested < 200) {
    const double a0 = U(rng), b0 = U(rng), b2 = U(rng), a2 = b2 * (1.0 + U(rng));
    if (std::abs(a2 * b0 - a0 * b2) < 1e-3) continue;
    const DerivedConstants d = derive_constants(coeffs(a0, b0, a2, b2));
    CHECK(std::abs((d.u + 2) * a0 / (d.v * b0) - 1) < 1e-12);
    CHECK(std::abs((d.v + 2) * b2 / (d.u * a2) - 1) < 1e-12);
    CHECK(std::abs(d.beta0 / ((d.u + d.v + 2) / (2 * d.v)) - 1) < 1e-12);
    CHECK(std::abs(d.beta / ((d.u + d.v + 2) / (2 * d.u)) - 1) < 1e-12);
    CHECK(std::abs(a0 * d.u / (b2 * d.v) / (d.c0 / d.c2) - 1) < 1e-12);
    CHECK((d.u > 0) == (d.delta > 0));
    CHECK((d.v > 0) == (d.delta > 0));
    ++tested;
  }
}

TEST_CASE("vector field") {
  const FlowParams p = preset("P_STABLE");
  const auto o = vector_field(p, 0, 0, 0.3);
  CHECK(o[0] == 0.0);
  CHECK(o[1] == 0.0);
  CHECK(o[2] == 1.0);
  CHECK(vector_field(p, 0.1, 0.0, 0.0)[1] == 0.0);
  const auto a = vector_field(p, 0.07, 0.11, 0.0), b = vector_field(p, -0.07, 0.11, 0.0);
  CHECK(a[0] == -b[0]);
  CHECK(a[1] == b[1]);
}

TEST_CASE("first integral") {
  const DerivedConstants d = derive_constants(preset("P_STABLE"));
  CHECK(first_integral(d, 1, 1) == doctest::Approx(5.0 / 12.0).epsilon(1e-14));
  const double x0 = 0.3, y0 = 0.2;
  const double ratio = std::pow(2.0, d.u) * (d.a0 * 4 * x0 * x0 / d.v + d.b2 * y0 * y0 / d.u) /
                       (d.a0 * x0 * x0 / d.v + d.b2 * y0 * y0 / d.u);
  CHECK(first_integral(d, 2 * x0, y0) == doctest::Approx(ratio * first_integral(d, x0, y0)).epsilon(1e-13));
}

TEST_CASE("homogeneous functions") {
  const HomogeneousSpec s{2.0, 1.0, 1.0, 1.0};
  CHECK(homogeneous_eval(s, 3, 4) == doctest::Approx(25).epsilon(1e-15));
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(-1, 1);
  for (double rho : {1.0, 2.0, 3.0, 0.5}) {
    const HomogeneousSpec h{rho, 0.7, 1.3, 0.4};
    for (int i = 0; i < 20; ++i) {
      const double x = U(rng), y = U(rng);
      CHECK(homogeneous_eval(h, 2 * x, 2 * y) / homogeneous_eval(h, x, y) ==
            doctest::Approx(std::pow(2.0, rho)).epsilon(1e-12));
    }
  }
  const FlowParams p;
  CHECK(p.w.theta0() != 0.0);
  CHECK(p.w.thetaInf() != 0.0);
}

TEST_CASE("parameter validation") {
  CHECK(code_of([] { derive_constants(coeffs(2, 1, 2, 1)); }) == ErrorCode::degenerate_delta);
  CHECK(code_of([] { derive_constants(coeffs(1, 1, 1, 2)); }) == ErrorCode::infinite_measure);
  CHECK(code_of([] {
          FlowParams p;
          p.w.scale = 40;
          validate_params(p);
        }) == ErrorCode::invalid_argument);
  CHECK(code_of([] { preset("P_NOPE"); }) == ErrorCode::config);
  CHECK(code_of([] { params_from_keys({{"bogus", "1"}}); }) == ErrorCode::config);
  CHECK(code_of([] { params_from_keys({{"a0", "x"}}); }) == ErrorCode::config);
  const FlowParams q = params_from_keys({{"preset", "P_CLT"}, {"eps", "0.2"}});
  CHECK(q.a2 == 5.0);
  CHECK(q.eps == 0.2);
  CHECK(params_from_keys(params_to_keys(q)).eps == 0.2);
}
