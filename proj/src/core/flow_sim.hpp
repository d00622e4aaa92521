#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "local_dynamics.hpp"
#include "model.hpp"

namespace aaf {

// Torus coordinates in [-1/2, 1/2)^2.
struct SectionPoint {
  double x = 0, y = 0;
};

// Coordinates in the cat map's eigenbasis (unstable, stable).
struct LocalPoint {
  double x = 0, y = 0;
};

struct ReturnRecord {
  SectionPoint start, end;
  std::uint64_t r = 1;
  double tau = 1.0;
  double psi_bar = 0.0;
  bool passed_neutral = false;
};

struct StepResult {
  SectionPoint q;
  double h;         // flow time to the next section crossing
  double dz_extra;  // integral of w over the step (h + dz_extra = 1)
  double psi;       // integral of C*W over the step (the chart part of -psi)
};

struct ReturnDetail {
  ReturnRecord rec;
  double xi = 0, eta = 0;  // unsigned entry coordinates, when passed_neutral
  double T = 0, theta_w = 0, theta_psi = 0;
  double stub = 0;         // flow time between chart exit and the return crossing (outside U)
};

class HybridSystem {
public:
  explicit HybridSystem(const FlowParams& p, std::uint64_t iterate_cap = 1'000'000'000'000'000ULL);

  const FlowParams& params() const { return p_; }
  const DerivedConstants& dc() const { return lm_.dc; }
  const LocalModel& local_model() const { return lm_; }
  const PassageTable& table() const { return table_; }
  double eps() const { return p_.eps; }

  LocalPoint to_local(const SectionPoint& q) const;
  SectionPoint to_torus(const LocalPoint& l) const;
  static SectionPoint wrap(double x, double y);
  SectionPoint cat(const SectionPoint& q) const;

  bool in_chart(const SectionPoint& q) const;  // q in P0
  bool in_strip(const SectionPoint& q) const;  // q in Y and cat(q) in P0
  bool in_Y(const SectionPoint& q) const { return !in_chart(q); }

  // One Poincare step: cat map outside P0, RK flow to the next crossing inside.
  StepResult poincare_step(const SectionPoint& q, double rk_tol = 1e-11) const;

  // First return to Y, neutral passages resolved in one shot.
  ReturnRecord induced_return(const SectionPoint& q) const { return induced_detail(q).rec; }
  ReturnDetail induced_detail(const SectionPoint& q) const;
  // Return of the strip point whose chart entry has local coordinates `entry`;
  // uses the entry exactly rather than recomputing it from the start point.
  ReturnDetail entry_detail(const LocalPoint& entry) const;
  // Oracle: literal stepping with poincare_step until the orbit is back in Y.
  ReturnRecord induced_return_literal(const SectionPoint& q, std::uint64_t max_steps,
                                      double rk_tol = 1e-11) const;
  double induced_psi(const ReturnRecord& rec) const;

  // Potential accumulated during the first `t` time units of the return
  // starting at d.rec.start, for 0 <= t <= tau. The C' impulse is booked at the
  // end of the return, so it is not included here.
  double partial_psi(const ReturnDetail& d, double t) const;

  SectionPoint random_point_in_Y(std::mt19937_64& rng) const;

  // measured C0 mismatch of the glue at the chart boundary
  double glue_mismatch() const { return glue_mismatch_; }
  std::uint64_t iterate_cap() const { return cap_; }

private:
  struct Stub {
    double x, y, d, psi;
  };
  ReturnDetail strip_detail(const SectionPoint& q, const LocalPoint& entry) const;
  // linear flow from (x, y) at height Z up to the section z = k
  Stub exit_stub(double x, double y, double Z, double k) const;

  FlowParams p_;
  LocalModel lm_;
  PassageTable table_;
  HomogeneousSpec psi_term_;
  double cu_, su_;  // unstable eigenvector
  std::uint64_t cap_;
  double glue_mismatch_ = 0;
};

double uniform01(std::mt19937_64& rng);
std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t stream);

// A single forward orbit of the induced map started from a seeded random point.
// The visitor receives records n_burn .. n_burn+n-1.
void srb_stream(const HybridSystem& sys, std::uint64_t seed, std::uint64_t n_burn,
                std::uint64_t n, const std::function<void(const ReturnRecord&)>& visit);
std::vector<ReturnRecord> srb_sample(const HybridSystem& sys, std::uint64_t seed,
                                     std::uint64_t n_burn, std::uint64_t n);

// Flow-time position on an orbit of the suspension: the current return
// (starting on Y) and the elapsed time inside it.
class FlowCursor {
public:
  FlowCursor(const HybridSystem& sys, const SectionPoint& q0);
  // Integral of psi along the next dt units of flow time.
  double advance(double dt);
  const SectionPoint& point() const { return cur_.rec.start; }
  double phase() const { return phase_; }
  std::uint64_t completed_returns() const { return completed_; }

private:
  const HybridSystem* sys_;
  ReturnDetail cur_;
  double phase_ = 0;
  std::uint64_t completed_ = 0;
};

double flow_birkhoff(const HybridSystem& sys, const SectionPoint& q0, double T_flow);

// Columnar binary return stream: "AAFRET01" magic, u32 version, u32 record
// bytes, u64 count, then packed little-endian records of
// 6 x f64 (start.x, start.y, end.x, end.y, tau, psi_bar), u32 r, u8 flags
// (bit0 passed_neutral, bit1 r saturated at u32 max).
void write_returns_binary(const std::string& path, const std::vector<ReturnRecord>& recs);
std::vector<ReturnRecord> read_returns_binary(const std::string& path);
void write_returns_csv(std::ostream& os, const std::vector<ReturnRecord>& recs);

}  // namespace aaf
