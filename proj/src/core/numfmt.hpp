#pragma once

#include <charconv>
#include <string>

namespace aaf {

// Shortest decimal text that round-trips; locale independent.
inline std::string fmt_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

}  // namespace aaf
