#pragma once

#include <stdexcept>
#include <string>

namespace aaf {

enum class ErrorCode {
  invalid_argument = 1,
  degenerate_delta,
  infinite_measure,
  domain,
  singularity,
  quadrature,
  root_not_bracketed,
  no_convergence,
  step_underflow,
  non_return,
  config,
  io,
  nonsummable,
  inadmissible,
};

// All library failures funnel through this type so the C layer can map them
// onto status codes.
class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace aaf
