#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace aaf {

// The thirteen acceptance checks. Each one measures, compares against pinned
// tolerances and reports the numbers it used.

enum class CheckScale { full, smoke };

struct CheckOptions {
  CheckScale scale = CheckScale::full;
  std::uint64_t seed = 1;
  unsigned threads = 1;
};

struct CheckValue {
  std::string key;
  double value;
};

struct CheckResult {
  int id = 0;
  std::string name;
  std::string anchor;  // opaque paper label
  bool pass = false;
  std::vector<CheckValue> values;
  std::string note;
};

constexpr int kCheckCount = 13;

CheckResult run_check(int id, const CheckOptions& opt);
const char* check_name(int id);
const char* check_anchor(int id);
// Drops the memoized streams and operators shared between checks.
void clear_check_cache();

std::string check_to_json(const CheckResult& r);

}  // namespace aaf
