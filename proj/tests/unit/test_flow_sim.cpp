#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

#include "flow_sim.hpp"
#include "model.hpp"

using namespace aaf;

namespace {

double wrap1(double v) { return v - std::floor(v + 0.5); }

const HybridSystem& stable_sys() {
  static const HybridSystem s(preset("P_STABLE"));
  return s;
}

}  // namespace

TEST_CASE("outside the chart the section map is the cat map") {
  const HybridSystem& sys = stable_sys();
  std::mt19937_64 rng = stream_rng(5, 0);
  int checked = 0;
  while (checked < 100) {
    const SectionPoint q = sys.random_point_in_Y(rng);
    if (sys.in_strip(q)) continue;
    const StepResult st = sys.poincare_step(q);
    CHECK(std::abs(wrap1(st.q.x - (2 * q.x + q.y))) < 1e-14);
    CHECK(std::abs(wrap1(st.q.y - (q.x + q.y))) < 1e-14);
    ++checked;
  }
}

TEST_CASE("the origin is a fixed point with unit return time") {
  const StepResult st = stable_sys().poincare_step({0.0, 0.0});
  CHECK(st.q.x == 0.0);
  CHECK(st.q.y == 0.0);
  CHECK(st.h == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("cat map spectrum") {
  // a small displacement along each eigenvector is scaled by its eigenvalue
  const double lu = (3 + std::sqrt(5.0)) / 2, ls = (3 - std::sqrt(5.0)) / 2;
  const HybridSystem& sys = stable_sys();
  const SectionPoint base{0.3, 0.2};
  const SectionPoint b1 = sys.cat(base);
  const double h = 1e-6;
  const SectionPoint pu = sys.cat({base.x + h, base.y + h * (lu - 2)});
  const SectionPoint ps = sys.cat({base.x + h, base.y + h * (ls - 2)});
  CHECK(wrap1(pu.x - b1.x) / h == doctest::Approx(lu).epsilon(1e-6));
  CHECK(wrap1(ps.x - b1.x) / h == doctest::Approx(ls).epsilon(1e-6));
}

TEST_CASE("immediate returns") {
  const HybridSystem& sys = stable_sys();
  const double sup_w = sup_w_on_chart(sys.params());
  std::mt19937_64 rng = stream_rng(6, 0);
  int checked = 0;
  while (checked < 200) {
    const SectionPoint q = sys.random_point_in_Y(rng);
    if (sys.in_strip(q)) continue;
    const ReturnRecord r = sys.induced_return(q);
    CHECK(r.r == 1);
    CHECK(r.tau >= 1 - sup_w);
    CHECK(r.tau <= 1 + sup_w);
    CHECK(r.psi_bar == sys.params().psi.offset);
    ++checked;
  }
}

TEST_CASE("one-shot strip returns agree with literal stepping") {
  const HybridSystem& sys = stable_sys();
  std::mt19937_64 rng = stream_rng(8, 0);
  int checked = 0;
  while (checked < 10) {
    const SectionPoint q = sys.random_point_in_Y(rng);
    if (!sys.in_strip(q)) continue;
    const ReturnRecord fast = sys.induced_return(q);
    if (fast.r < 20 || fast.r > 3000) continue;
    const ReturnRecord slow = sys.induced_return_literal(q, 100'000);
    CAPTURE(fast.r);
    CHECK(std::abs(static_cast<double>(fast.r) / static_cast<double>(slow.r) - 1) < 0.01);
    CHECK(std::abs(fast.tau / slow.tau - 1) < 0.01);
    ++checked;
  }
}

TEST_CASE("tau* from two seeds and two burn-ins") {
  const HybridSystem& sys = stable_sys();
  auto mean_tau = [&](std::uint64_t seed, std::uint64_t burn) {
    long double s = 0;
    const std::uint64_t n = 1'000'000;
    srb_stream(sys, seed, burn, n, [&](const ReturnRecord& r) { s += r.tau; });
    return static_cast<double>(s / n);
  };
  const double a = mean_tau(1, 10'000), b = mean_tau(2, 10'000), c = mean_tau(1, 20'000);
  CAPTURE(a);
  CAPTURE(b);
  CHECK(std::isfinite(a));
  CHECK(std::abs(a / b - 1) < 0.01);
  CHECK(std::abs(c / a - 1) < 0.005);
}

TEST_CASE("flow Birkhoff integrals") {
  const HybridSystem& sys = stable_sys();
  std::mt19937_64 rng = stream_rng(9, 0);
  const SectionPoint q = sys.random_point_in_Y(rng);
  FlowCursor c(sys, q);
  const double a = c.advance(700.0), b = c.advance(1300.0);
  FlowCursor d(sys, q);
  const double whole = d.advance(2000.0);
  CHECK(whole == doctest::Approx(a + b).epsilon(1e-12));

  FlowParams p = preset("P_STABLE");
  p.psi.offset = 0;
  p.psi.scale = 0;
  const HybridSystem zero(p);
  CHECK(flow_birkhoff(zero, q, 1000.0) == 0.0);

  p.psi.offset = 2.5;
  const HybridSystem only_offset(p);
  FlowCursor e(only_offset, q);
  const double v = e.advance(1000.0);
  CHECK(v == doctest::Approx(2.5 * static_cast<double>(e.completed_returns())).epsilon(1e-12));
}

TEST_CASE("binary return files round-trip") {
  const auto recs = srb_sample(stable_sys(), 3, 100, 500);
  const auto path = std::filesystem::temp_directory_path() / "aaf_test_returns.bin";
  write_returns_binary(path.string(), recs);
  const auto back = read_returns_binary(path.string());
  REQUIRE(back.size() == recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    CHECK(back[i].tau == recs[i].tau);
    CHECK(back[i].psi_bar == recs[i].psi_bar);
    CHECK(back[i].r == recs[i].r);
    CHECK(back[i].start.x == recs[i].start.x);
    CHECK(back[i].passed_neutral == recs[i].passed_neutral);
  }
  std::filesystem::remove(path);
  std::ostringstream os;
  write_returns_csv(os, recs);
  const std::string text = os.str();
  CHECK(std::count(text.begin(), text.end(), '\n') == 501);
}
