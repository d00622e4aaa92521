// Acceptance run: one line per criterion. Exit status is 0 when every failing
// criterion is listed in --expect-fail (documented, analysed failures).
#include <chrono>
#include <cstdio>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "checks.hpp"

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria 1-13"};
  bool smoke = false;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  std::vector<int> only, expect_fail;
  std::string json_path;
  app.add_flag("--smoke", smoke, "reduced sample sizes");
  app.add_option("--seed", seed);
  app.add_option("--threads", threads);
  app.add_option("--only", only, "criteria to run")->delimiter(',');
  app.add_option("--expect-fail", expect_fail, "criteria known to fail")->delimiter(',');
  app.add_option("--json", json_path, "write results as JSON lines");
  CLI11_PARSE(app, argc, argv);

  if (only.empty())
    for (int i = 1; i <= aaf::kCheckCount; ++i) only.push_back(i);
  const std::set<int> expected(expect_fail.begin(), expect_fail.end());
  aaf::CheckOptions opt;
  opt.scale = smoke ? aaf::CheckScale::smoke : aaf::CheckScale::full;
  opt.seed = seed;
  opt.threads = threads;

  std::ofstream js;
  if (!json_path.empty()) js.open(json_path);
  int unexpected = 0;
  for (int id : only) {
    const auto t0 = std::chrono::steady_clock::now();
    const aaf::CheckResult r = aaf::run_check(id, opt);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %2d %s  %-34s", id, r.pass ? "PASS" : "FAIL", r.name.c_str());
    for (const auto& v : r.values) std::printf(" %s=%.6g", v.key.c_str(), v.value);
    if (!r.note.empty()) std::printf("  [%s]", r.note.c_str());
    if (!r.pass && expected.count(id)) std::printf("  (expected failure, see README)");
    std::printf("  (%.1fs)\n", secs);
    std::fflush(stdout);
    if (js) js << aaf::check_to_json(r) << "\n";
    if (!r.pass && !expected.count(id)) ++unexpected;
  }
  return unexpected == 0 ? 0 : 1;
}
