#include "flow_sim.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

#include "error.hpp"
#include "numfmt.hpp"
#include "rk.hpp"

namespace aaf {

namespace {

constexpr double kLambdaU = 2.6180339887498949;  // (3 + sqrt 5) / 2

}  // namespace

HybridSystem::HybridSystem(const FlowParams& p, std::uint64_t iterate_cap)
    : p_(p),
      lm_(LocalModel::from(p)),
      table_(lm_, p.psi.chart_term()),
      psi_term_(p.psi.chart_term()),
      cap_(iterate_cap) {
  validate_params(p);
  // unstable eigenvector of [[2,1],[1,1]] is (1, lambda_u - 2)
  const double n = std::hypot(1.0, kLambdaU - 2.0);
  cu_ = 1.0 / n;
  su_ = (kLambdaU - 2.0) / n;

  // P0 must embed in the torus, and the linear continuation of an exit, from
  // |x| = eps to |x| < lambda_u eps, must stay outside P0 after wrapping
  const double e = p.eps;
  for (double sx : {-1.0, 1.0})
    for (double sy : {-1.0, 1.0}) {
      const double tx = sx * e * cu_ - sy * e * su_, ty = sx * e * su_ + sy * e * cu_;
      if (std::abs(tx) >= 0.5 || std::abs(ty) >= 0.5)
        fail(ErrorCode::invalid_argument,
             "eps = " + fmt_double(e) + " too large: the chart overlaps itself on the torus");
    }
  for (int i = 0; i <= 64; ++i)
    for (int j = -8; j <= 8; ++j)
      for (double sx : {-1.0, 1.0}) {
        const double t = e * std::pow(kLambdaU, i / 64.0) * (1.0 + 1e-9);
        if (in_chart(to_torus({sx * t, e * j / 8.0})))
          fail(ErrorCode::invalid_argument,
               "eps = " + fmt_double(e) + " too large: chart exits wrap back into the chart");
      }

  // mismatch of the section map across the chart boundary.
  // The exit edge glues continuously (the flow leaving U continues linearly);
  // the entry edge and the corners do not.
  const double z = p.eps;
  for (double frac : {0.0, 0.5, 0.9, 0.999}) {
    for (const LocalPoint& l : {LocalPoint{z * frac, z * (1.0 - 1e-9)},
                                LocalPoint{z * (1.0 - 1e-9), z * frac}}) {
      const SectionPoint q = to_torus(l);
      const LocalPoint a = to_local(poincare_step(q).q), b = to_local(cat(q));
      glue_mismatch_ = std::max(glue_mismatch_, std::hypot(a.x - b.x, a.y - b.y));
    }
  }
}

LocalPoint HybridSystem::to_local(const SectionPoint& q) const {
  return {q.x * cu_ + q.y * su_, -q.x * su_ + q.y * cu_};
}

SectionPoint HybridSystem::to_torus(const LocalPoint& l) const {
  return wrap(l.x * cu_ - l.y * su_, l.x * su_ + l.y * cu_);
}

SectionPoint HybridSystem::wrap(double x, double y) {
  return {x - std::floor(x + 0.5), y - std::floor(y + 0.5)};
}

SectionPoint HybridSystem::cat(const SectionPoint& q) const {
  return wrap(2.0 * q.x + q.y, q.x + q.y);
}

bool HybridSystem::in_chart(const SectionPoint& q) const {
  const LocalPoint l = to_local(q);
  return std::abs(l.x) < p_.eps && std::abs(l.y) < p_.eps;
}

bool HybridSystem::in_strip(const SectionPoint& q) const {
  return !in_chart(q) && in_chart(cat(q));
}

StepResult HybridSystem::poincare_step(const SectionPoint& q, double rk_tol) const {
  if (!in_chart(q)) return {cat(q), 1.0, 0.0, 0.0};
  const LocalPoint l = to_local(q);
  RkRhs rhs = [this](double, const RkState& y) {
    const auto v = vector_field(p_, y[0], y[1], y[2]);
    return RkState{v[0], v[1], v[2], homogeneous_eval(psi_term_, y[0], y[1])};
  };
  RkOptions opt;
  opt.tol = rk_tol;
  opt.h0 = 0.05;
  const double z0 = p_.eps;
  std::vector<RkEvent> ev{
      {"section", [](double, const RkState& y) { return y[2] - 1.0; }, true},
      {"exit", [z0](double, const RkState& y) { return std::abs(y[0]) - z0; }, true}};
  const RkRun run = dopri5(rhs, 0.0, {l.x, l.y, 0.0, 0.0}, 10.0, opt, ev);
  if (!run.stopped_by_event) fail(ErrorCode::non_return, "local flow did not reach the section");
  if (run.hits.back().name == "section")
    return {to_torus({run.y[0], run.y[1]}), run.t, 1.0 - run.t, run.y[3]};
  // left U before the section: linear flow for the rest of the unit z-step
  const Stub st = exit_stub(run.y[0], run.y[1], run.y[2], 1.0);
  return {to_torus({st.x, st.y}), run.t + st.d, 1.0 - run.t - st.d, run.y[3]};
}

HybridSystem::Stub HybridSystem::exit_stub(double x, double y, double Z, double k) const {
  // outside U the flow is the linear hyperbolic flow with time-one map the cat map
  const double d = std::max(0.0, k - Z);
  return {x * std::pow(kLambdaU, d), y * std::pow(kLambdaU, -d), d, 0.0};
}

ReturnDetail HybridSystem::induced_detail(const SectionPoint& q) const {
  ReturnDetail d;
  d.rec.start = q;
  const SectionPoint q1 = cat(q);
  if (!in_chart(q1)) {
    d.rec.end = q1;
    d.rec.r = 1;
    d.rec.tau = 1.0;
    d.rec.psi_bar = p_.psi.offset + p_.psi.flat;
    return d;
  }
  return strip_detail(q, to_local(q1));
}

ReturnDetail HybridSystem::entry_detail(const LocalPoint& entry) const {
  if (!(std::abs(entry.x) < p_.eps && std::abs(entry.y) < p_.eps))
    fail(ErrorCode::domain, "entry point outside the chart");
  const SectionPoint e = to_torus(entry);
  const SectionPoint q = wrap(e.x - e.y, 2.0 * e.y - e.x);  // inverse cat map
  if (in_chart(q)) fail(ErrorCode::domain, "entry point is not reached from Y");
  return strip_detail(q, entry);
}

ReturnDetail HybridSystem::strip_detail(const SectionPoint& q, const LocalPoint& l) const {
  ReturnDetail d;
  d.rec.start = q;
  const double sx = l.x < 0 ? -1.0 : 1.0, sy = l.y < 0 ? -1.0 : 1.0;
  d.xi = std::abs(l.x);
  d.eta = std::abs(l.y);
  if (!(d.xi > 0.0)) {
    std::ostringstream os;
    os << "orbit from (" << q.x << ", " << q.y << ") enters the chart on the stable manifold"
       << " (xi = 0, eta = " << d.eta << "): no return";
    fail(ErrorCode::non_return, os.str());
  }
  const FastPassage fp = table_.passage(d.xi, d.eta);
  d.T = fp.T;
  d.theta_w = fp.theta_w;
  d.theta_psi = fp.theta_psi;
  const double Z = fp.T + fp.theta_w;
  const double k = std::ceil(Z);
  if (!(k + 1.0 <= static_cast<double>(cap_))) {
    std::ostringstream os;
    os << "non-return within the iterate cap " << cap_ << ": start (" << q.x << ", " << q.y
       << "), chart entry (" << l.x << ", " << l.y << "), passage time " << fp.T;
    fail(ErrorCode::non_return, os.str());
  }
  const Stub st = exit_stub(p_.eps, fp.omega, Z, k);
  d.stub = st.d;
  d.rec.end = to_torus({sx * st.x, sy * st.y});
  d.rec.r = 1 + static_cast<std::uint64_t>(k);
  d.rec.tau = 1.0 + fp.T + st.d;
  d.rec.psi_bar = p_.psi.offset + p_.psi.flat * d.rec.tau - (fp.theta_psi + st.psi);
  d.rec.passed_neutral = true;
  return d;
}

double HybridSystem::induced_psi(const ReturnRecord& rec) const {
  const ReturnDetail d = induced_detail(rec.start);
  return d.rec.psi_bar;
}

double HybridSystem::partial_psi(const ReturnDetail& d, double t) const {
  double acc = p_.psi.flat * t;
  if (!d.rec.passed_neutral || t <= 1.0) return acc;
  const double s = t - 1.0;
  if (s <= d.T) {
    const FastPassage fp = table_.passage(d.xi, d.eta);
    return acc - table_.partial(fp, s).theta_psi;
  }
  // psi vanishes outside U
  return acc - d.theta_psi;
}

ReturnRecord HybridSystem::induced_return_literal(const SectionPoint& q, std::uint64_t max_steps,
                                                  double rk_tol) const {
  ReturnRecord rec;
  rec.start = q;
  rec.r = 0;
  rec.tau = 0.0;
  double psi0 = 0.0;
  SectionPoint cur = q;
  for (std::uint64_t n = 0; n < max_steps; ++n) {
    const bool inside = in_chart(cur);
    const StepResult st = poincare_step(cur, rk_tol);
    rec.r += 1;
    rec.tau += st.h;
    psi0 += st.psi;
    if (inside) rec.passed_neutral = true;
    cur = st.q;
    if (!in_chart(cur)) {
      rec.end = cur;
      rec.psi_bar = p_.psi.offset + p_.psi.flat * rec.tau - psi0;
      return rec;
    }
  }
  std::ostringstream os;
  os << "literal stepping from (" << q.x << ", " << q.y << ") did not return within "
     << max_steps << " steps; last point (" << cur.x << ", " << cur.y << ")";
  fail(ErrorCode::non_return, os.str());
}

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    0x5eedu};
  return std::mt19937_64(seq);
}

SectionPoint HybridSystem::random_point_in_Y(std::mt19937_64& rng) const {
  for (;;) {
    const double x = uniform01(rng) - 0.5, y = uniform01(rng) - 0.5;
    SectionPoint q{x, y};
    if (!in_chart(q)) return q;
  }
}

void srb_stream(const HybridSystem& sys, std::uint64_t seed, std::uint64_t n_burn,
                std::uint64_t n, const std::function<void(const ReturnRecord&)>& visit) {
  auto rng = stream_rng(seed, 0);
  SectionPoint q = sys.random_point_in_Y(rng);
  for (std::uint64_t i = 0; i < n_burn; ++i) q = sys.induced_return(q).end;
  for (std::uint64_t i = 0; i < n; ++i) {
    const ReturnRecord rec = sys.induced_return(q);
    visit(rec);
    q = rec.end;
  }
}

std::vector<ReturnRecord> srb_sample(const HybridSystem& sys, std::uint64_t seed,
                                     std::uint64_t n_burn, std::uint64_t n) {
  std::vector<ReturnRecord> out;
  out.reserve(n);
  srb_stream(sys, seed, n_burn, n, [&](const ReturnRecord& r) { out.push_back(r); });
  return out;
}

FlowCursor::FlowCursor(const HybridSystem& sys, const SectionPoint& q0) : sys_(&sys) {
  if (!sys.in_Y(q0)) fail(ErrorCode::domain, "flow cursor must start on Y");
  cur_ = sys.induced_detail(q0);
}

double FlowCursor::advance(double dt) {
  if (!(dt >= 0.0)) fail(ErrorCode::invalid_argument, "flow time must be nonnegative");
  double acc = 0.0;
  double left = dt;
  for (;;) {
    const double rest = cur_.rec.tau - phase_;
    if (left < rest) {
      acc += sys_->partial_psi(cur_, phase_ + left) - sys_->partial_psi(cur_, phase_);
      phase_ += left;
      return acc;
    }
    acc += cur_.rec.psi_bar - (phase_ > 0.0 ? sys_->partial_psi(cur_, phase_) : 0.0);
    left -= rest;
    ++completed_;
    cur_ = sys_->induced_detail(cur_.rec.end);
    phase_ = 0.0;
  }
}

double flow_birkhoff(const HybridSystem& sys, const SectionPoint& q0, double T_flow) {
  if (!(T_flow > 0.0)) fail(ErrorCode::invalid_argument, "T_flow must be positive");
  FlowCursor c(sys, q0);
  return c.advance(T_flow);
}

namespace {

constexpr char kMagic[8] = {'A', 'A', 'F', 'R', 'E', 'T', '0', '1'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kRecordBytes = 6 * 8 + 4 + 1;

template <class T>
void put_le(std::string& buf, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  buf.append(reinterpret_cast<const char*>(b), sizeof(T));
}

template <class T>
T get_le(const char*& p) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  p += sizeof(T);
  T v;
  std::memcpy(&v, b, sizeof(T));
  return v;
}

}  // namespace

void write_returns_binary(const std::string& path, const std::vector<ReturnRecord>& recs) {
  std::string buf(kMagic, kMagic + 8);
  put_le<std::uint32_t>(buf, kVersion);
  put_le<std::uint32_t>(buf, kRecordBytes);
  put_le<std::uint64_t>(buf, recs.size());
  buf.reserve(buf.size() + recs.size() * kRecordBytes);
  for (const auto& r : recs) {
    for (double v : {r.start.x, r.start.y, r.end.x, r.end.y, r.tau, r.psi_bar})
      put_le<double>(buf, v);
    const bool sat = r.r > std::numeric_limits<std::uint32_t>::max();
    put_le<std::uint32_t>(buf, sat ? std::numeric_limits<std::uint32_t>::max()
                                   : static_cast<std::uint32_t>(r.r));
    put_le<std::uint8_t>(buf, static_cast<std::uint8_t>((r.passed_neutral ? 1 : 0) | (sat ? 2 : 0)));
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorCode::io, "cannot open " + path + " for writing");
  os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!os) fail(ErrorCode::io, "write failed: " + path);
}

std::vector<ReturnRecord> read_returns_binary(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorCode::io, "cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (buf.size() < 24 || std::memcmp(buf.data(), kMagic, 8) != 0)
    fail(ErrorCode::io, path + ": not a return stream");
  const char* p = buf.data() + 8;
  const auto version = get_le<std::uint32_t>(p);
  const auto rec_bytes = get_le<std::uint32_t>(p);
  const auto count = get_le<std::uint64_t>(p);
  if (version != kVersion || rec_bytes != kRecordBytes ||
      buf.size() != 24 + count * kRecordBytes)
    fail(ErrorCode::io, path + ": unsupported version or truncated file");
  std::vector<ReturnRecord> out(count);
  for (auto& r : out) {
    r.start.x = get_le<double>(p);
    r.start.y = get_le<double>(p);
    r.end.x = get_le<double>(p);
    r.end.y = get_le<double>(p);
    r.tau = get_le<double>(p);
    r.psi_bar = get_le<double>(p);
    r.r = get_le<std::uint32_t>(p);
    r.passed_neutral = (get_le<std::uint8_t>(p) & 1) != 0;
  }
  return out;
}

void write_returns_csv(std::ostream& os, const std::vector<ReturnRecord>& recs) {
  os << "start_x,start_y,end_x,end_y,r,tau,psi_bar,passed_neutral\n";
  for (const auto& r : recs)
    os << fmt_double(r.start.x) << ',' << fmt_double(r.start.y) << ',' << fmt_double(r.end.x)
       << ',' << fmt_double(r.end.y) << ',' << r.r << ',' << fmt_double(r.tau) << ','
       << fmt_double(r.psi_bar) << ',' << (r.passed_neutral ? 1 : 0) << '\n';
}

}  // namespace aaf
