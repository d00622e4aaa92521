#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <cstring>
#include <string>
#include <vector>

#include <json.hpp>

#include "aaflow/aaflow.h"

TEST_CASE("presets and derived constants") {
  aaf_params p;
  REQUIRE(aaf_preset("P_STABLE", &p) == AAF_OK);
  aaf_derived d;
  REQUIRE(aaf_derive(&p, &d) == AAF_OK);
  CHECK(d.delta == 1.0);
  CHECK(d.u == doctest::Approx(4.0));
  CHECK(d.v == doctest::Approx(6.0));
  CHECK(d.beta == doctest::Approx(1.5));
  CHECK(d.kappa == doctest::Approx(1.0));
}

TEST_CASE("errors map to status codes and messages") {
  aaf_params p;
  CHECK(aaf_preset("P_NOPE", &p) == AAF_E_CONFIG);
  CHECK(std::string(aaf_last_error()).find("P_NOPE") != std::string::npos);
  CHECK(aaf_preset("P_STABLE", nullptr) == AAF_E_NULL_POINTER);
  REQUIRE(aaf_preset("P_STABLE", &p) == AAF_OK);
  CHECK(std::string(aaf_last_error()).empty());
  CHECK(aaf_params_set(&p, "bogus", "1") == AAF_E_CONFIG);
  CHECK(aaf_params_set(&p, "eps", "zero") == AAF_E_CONFIG);
  REQUIRE(aaf_params_set(&p, "eps", "0.2") == AAF_OK);
  CHECK(p.eps == 0.2);
  aaf_params bad = p;
  bad.a2 = 2.0;
  bad.a0 = 2.0;  // Delta = 0
  aaf_derived d;
  CHECK(aaf_derive(&bad, &d) == AAF_E_DEGENERATE_DELTA);
  bad = p;
  bad.a2 = 0.5;
  CHECK(aaf_derive(&bad, &d) == AAF_E_INFINITE_MEASURE);
  CHECK(std::string(aaf_status_name(AAF_E_IO)) == "io");
  CHECK(aaf_model_key_count() >= 13);
}

TEST_CASE("system handle: deterministic return streams") {
  aaf_params p;
  REQUIRE(aaf_preset("P_CLT", &p) == AAF_OK);
  aaf_system* sys = nullptr;
  REQUIRE(aaf_system_create(&p, &sys) == AAF_OK);
  std::vector<aaf_return> a(2000), b(2000);
  REQUIRE(aaf_sample_returns(sys, 7, 100, a.size(), a.data()) == AAF_OK);
  REQUIRE(aaf_sample_returns(sys, 7, 100, b.size(), b.data()) == AAF_OK);
  CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(aaf_return)) == 0);
  double T = 0, th = 0;
  CHECK(aaf_passage(sys, 0.01, 0.1, &T, &th) == AAF_OK);
  CHECK(T > 1);
  aaf_system_destroy(sys);
}

TEST_CASE("operator handle") {
  aaf_params p;
  REQUIRE(aaf_preset("P_STABLE", &p) == AAF_OK);
  aaf_system* sys = nullptr;
  REQUIRE(aaf_system_create(&p, &sys) == AAF_OK);
  aaf_ulam_options o;
  aaf_ulam_options_default(&o);
  o.resolution = 32;
  o.samples_per_box = 64;
  o.strip_samples = 1 << 16;
  aaf_ulam* op = nullptr;
  const aaf_status st = aaf_ulam_build(sys, &o, &op);
  INFO(std::string(aaf_last_error()));
  REQUIRE(st == AAF_OK);
  double lambda = 0;
  REQUIRE(aaf_ulam_eigenvalue(op, 0, 0, &lambda, nullptr) == AAF_OK);
  CHECK(std::abs(lambda - 1) < 1e-8);
  o.resolution = 0;
  aaf_ulam* bad = nullptr;
  CHECK(aaf_ulam_build(sys, &o, &bad) == AAF_E_INVALID_ARGUMENT);
  CHECK(bad == nullptr);
  aaf_ulam_destroy(op);
  aaf_system_destroy(sys);
}

TEST_CASE("acceptance checks through the C interface") {
  CHECK(aaf_check_count() == 13);
  char* text = nullptr;
  REQUIRE(aaf_run_check(1, 1, 1, 1, &text) == AAF_OK);
  const auto j = nlohmann::json::parse(text);
  aaf_free_string(text);
  CHECK(j.at("id") == 1);
  CHECK(j.at("pass") == true);
  CHECK(aaf_run_check(14, 1, 1, 1, &text) == AAF_E_INVALID_ARGUMENT);
}
