// aaflow: configuration-driven experiment runner over the C interface.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <boost/crc.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>

#include "aaflow/aaflow.h"

extern char** environ;

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;
constexpr int kExitCheckFailed = 3;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct RuntimeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void check(aaf_status s, const char* what) {
  if (s == AAF_OK) return;
  const std::string msg = std::string(what) + ": " + aaf_status_name(s) + ": " + aaf_last_error();
  if (s == AAF_E_CONFIG) throw ConfigError(msg);
  throw RuntimeError(msg);
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc() ? std::string(buf, end) : std::string("?");
}

// ---- configuration ---------------------------------------------------------

enum class Kind { integer, real, boolean, text };

struct KeySpec {
  const char* key;
  const char* def;
  Kind kind;
};

// [model] is handled separately: preset plus the keys of the C interface.
const std::vector<std::pair<std::string, std::vector<KeySpec>>>& schema() {
  static const std::vector<std::pair<std::string, std::vector<KeySpec>>> s = {
      {"run",
       {{"seed", "1", Kind::integer}, {"threads", "1", Kind::integer}, {"out", "aaflow_out", Kind::text}}},
      {"local",
       {{"eta_frac", "0.5", Kind::real}, {"xi_points", "25", Kind::integer}, {"T_max", "1e4", Kind::real}}},
      {"tails",
       {{"n", "1000000", Kind::integer},
        {"burn", "10000", Kind::integer},
        {"k_frac", "0.02", Kind::real},
        {"survival_points", "60", Kind::integer},
        {"stability_points", "16", Kind::integer},
        {"write_returns", "true", Kind::boolean}}},
      {"limits",
       {{"case", "auto", Kind::text},
        {"T", "1e4", Kind::real},
        {"n", "10000", Kind::integer},
        {"ks_threshold", "-1", Kind::real},
        {"n_centering", "100000000", Kind::integer},
        {"n_burn", "10000", Kind::integer},
        {"sample_burn", "1000", Kind::integer},
        {"var_tolerance", "0.1", Kind::real},
        {"alpha_tolerance", "0.1", Kind::real},
        {"qq_points", "200", Kind::integer}}},
      {"pressure",
       {{"resolution", "128", Kind::integer},
        {"samples_per_box", "64", Kind::integer},
        {"strip_samples", "1048576", Kind::integer},
        {"r_max", "100000", Kind::integer},
        {"level_ratio", "1.15", Kind::real},
        {"u_lo", "1e-6", Kind::real},
        {"u_hi", "0.1", Kind::real},
        {"u_points", "21", Kind::integer},
        {"s", "0", Kind::real},
        {"fit_lo", "1e-4", Kind::real},
        {"fit_hi", "1e-3", Kind::real},
        {"s_lo", "1e-4", Kind::real},
        {"s_hi", "1e-2", Kind::real},
        {"s_points", "9", Kind::integer},
        {"pi_returns", "1000000", Kind::integer}}},
      {"report", {{"scale", "full", Kind::text}, {"checks", "1-13", Kind::text}}},
  };
  return s;
}

std::string upper(std::string s) {
  for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

void validate_value(const std::string& where, const std::string& v, Kind k) {
  try {
    std::size_t pos = 0;
    switch (k) {
      case Kind::integer: {
        if (v.empty() || v[0] == '-') throw std::invalid_argument("");
        const double d = std::stod(v, &pos);  // accepts 1e6
        if (d != std::floor(d) || d > 9.2e18) throw std::invalid_argument("");
        break;
      }
      case Kind::real:
        std::stod(v, &pos);
        break;
      case Kind::boolean:
        if (v != "true" && v != "false") throw std::invalid_argument("");
        pos = v.size();
        break;
      case Kind::text:
        pos = v.size();
        break;
    }
    if (pos != v.size()) throw std::invalid_argument("");
  } catch (const std::exception&) {
    throw ConfigError("bad value for " + where + ": '" + v + "'");
  }
}

class Config {
public:
  // defaults, then the file, then AAFLOW_<SECTION>_<KEY> variables
  void load(const std::string& path) {
    for (const auto& [sec, keys] : schema())
      for (const KeySpec& k : keys) values_[sec][k.key] = k.def;
    model_["preset"] = "P_STABLE";
    if (!path.empty()) {
      boost::property_tree::ptree pt;
      try {
        boost::property_tree::ini_parser::read_ini(path, pt);
      } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError(std::string("cannot read config: ") + e.what());
      }
      for (const auto& [sec, body] : pt) {
        if (body.empty() && !body.data().empty()) throw ConfigError("key outside a section: " + sec);
        for (const auto& [key, val] : body) set(sec, key, val.data(), "config");
      }
    }
    for (char** e = environ; *e; ++e) {
      const std::string kv = *e;
      if (kv.rfind("AAFLOW_", 0) != 0) continue;
      const auto eq = kv.find('=');
      const std::string name = kv.substr(7, eq - 7), value = kv.substr(eq + 1);
      bool hit = false;
      for (const std::string& sec : section_names()) {
        const std::string prefix = upper(sec) + "_";
        if (name.rfind(prefix, 0) != 0) continue;
        const std::string key_up = name.substr(prefix.size());
        for (const std::string& key : keys_of(sec))
          if (upper(key) == key_up) {
            set(sec, key, value, "environment");
            hit = true;
          }
      }
      if (!hit) throw ConfigError("unknown override variable AAFLOW_" + name);
    }
    resolve_model();
  }

  void set(const std::string& sec, const std::string& key, const std::string& value, const char* origin) {
    if (sec == "model") {
      const auto ks = keys_of("model");
      if (std::find(ks.begin(), ks.end(), key) == ks.end())
        throw ConfigError(std::string("unknown key model.") + key + " (" + origin + ")");
      model_[key] = value;
      return;
    }
    auto s = std::find_if(schema().begin(), schema().end(), [&](const auto& p) { return p.first == sec; });
    if (s == schema().end()) throw ConfigError("unknown section [" + sec + "] (" + origin + ")");
    auto k = std::find_if(s->second.begin(), s->second.end(), [&](const KeySpec& x) { return key == x.key; });
    if (k == s->second.end()) throw ConfigError("unknown key " + sec + "." + key + " (" + origin + ")");
    validate_value(sec + "." + key, value, k->kind);
    values_[sec][key] = value;
  }

  std::string str(const std::string& sec, const std::string& key) const { return values_.at(sec).at(key); }
  double real(const std::string& sec, const std::string& key) const { return std::stod(str(sec, key)); }
  std::uint64_t uint(const std::string& sec, const std::string& key) const {
    return static_cast<std::uint64_t>(std::stod(str(sec, key)));
  }
  bool boolean(const std::string& sec, const std::string& key) const { return str(sec, key) == "true"; }

  const aaf_params& params() const { return params_; }
  const std::string& preset_name() const { return model_.at("preset"); }

  // canonical text of the resolved configuration, the input of the hash; the
  // output directory does not take part
  std::string canonical() const {
    std::ostringstream os;
    os << "[model]\n";
    for (const auto& [k, v] : resolved_model_) os << k << "=" << v << "\n";
    for (const auto& [sec, keys] : schema()) {
      os << "[" << sec << "]\n";
      for (const KeySpec& k : keys)
        if (!(sec == "run" && std::string(k.key) == "out"))
          os << k.key << "=" << values_.at(sec).at(k.key) << "\n";
    }
    return os.str();
  }

  json to_json() const {
    json j;
    json m;
    for (const auto& [k, v] : resolved_model_) m[k] = v;
    j["model"] = m;
    for (const auto& [sec, keys] : schema()) {
      json s;
      for (const KeySpec& k : keys) s[k.key] = values_.at(sec).at(k.key);
      j[sec] = s;
    }
    return j;
  }

private:
  static std::vector<std::string> section_names() {
    std::vector<std::string> out{"model"};
    for (const auto& s : schema()) out.push_back(s.first);
    return out;
  }
  static std::vector<std::string> keys_of(const std::string& sec) {
    std::vector<std::string> out;
    if (sec == "model") {
      out.push_back("preset");
      for (std::size_t i = 0; i < aaf_model_key_count(); ++i) {
        const std::string k = aaf_model_key(i);
        if (k != "preset") out.push_back(k);
      }
      return out;
    }
    for (const auto& s : schema())
      if (s.first == sec)
        for (const KeySpec& k : s.second) out.push_back(k.key);
    return out;
  }

  void resolve_model() {
    if (aaf_preset(model_.at("preset").c_str(), &params_) != AAF_OK)
      throw ConfigError(std::string("model.preset: ") + aaf_last_error());
    resolved_model_.clear();
    resolved_model_["preset"] = model_.at("preset");
    for (const auto& [k, v] : model_) {
      if (k == "preset") continue;
      if (aaf_params_set(&params_, k.c_str(), v.c_str()) != AAF_OK)
        throw ConfigError("model." + k + ": " + aaf_last_error());
    }
    const aaf_status s = aaf_params_validate(&params_);
    if (s != AAF_OK) throw ConfigError(std::string("model: ") + aaf_last_error());
    // every model key with its effective value
    const aaf_params& p = params_;
    const std::map<std::string, double> eff = {
        {"a0", p.a0},           {"a2", p.a2},         {"b0", p.b0},           {"b2", p.b2},
        {"eps", p.eps},         {"w_rho", p.w.rho},   {"w_scale", p.w.scale}, {"w_px", p.w.px},
        {"w_qy", p.w.qy},       {"psi_offset", p.psi.offset}, {"psi_scale", p.psi.scale},
        {"psi_rho", p.psi.rho}, {"psi_flat", p.psi.flat}};
    for (const auto& [k, v] : eff) resolved_model_[k] = fmt(v);
  }

  std::map<std::string, std::map<std::string, std::string>> values_;
  std::map<std::string, std::string> model_;
  std::map<std::string, std::string> resolved_model_;
  aaf_params params_{};
};

std::vector<int> parse_check_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      const auto dash = item.find('-');
      const int lo = std::stoi(item.substr(0, dash));
      const int hi = dash == std::string::npos ? lo : std::stoi(item.substr(dash + 1));
      for (int i = lo; i <= hi; ++i) out.push_back(i);
    } catch (const std::exception&) {
      throw ConfigError("report.checks: cannot parse '" + item + "'");
    }
  }
  for (int i : out)
    if (i < 1 || i > aaf_check_count()) throw ConfigError("report.checks: no check " + std::to_string(i));
  if (out.empty()) throw ConfigError("report.checks is empty");
  return out;
}

// ---- run context -----------------------------------------------------------

struct CheckLine {
  std::string name, anchor;
  bool pass;
  json values;
  std::string note;
};

struct Run {
  std::string subcommand;
  Config cfg;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  fs::path out;
  bool strict = false;
  std::vector<CheckLine> checks;
  std::vector<std::string> artifacts;
  std::ostringstream summary;

  fs::path artifact(const std::string& name) {
    artifacts.push_back(name);
    return out / name;
  }
  void add_check(CheckLine c) { checks.push_back(std::move(c)); }
};

struct SystemHandle {
  aaf_system* p = nullptr;
  explicit SystemHandle(const aaf_params& params) { check(aaf_system_create(&params, &p), "system"); }
  ~SystemHandle() { aaf_system_destroy(p); }
  SystemHandle(const SystemHandle&) = delete;
  SystemHandle& operator=(const SystemHandle&) = delete;
};

struct UlamHandle {
  aaf_ulam* p = nullptr;
  ~UlamHandle() { aaf_ulam_destroy(p); }
};

std::ofstream open_out(const fs::path& p) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw RuntimeError("cannot write " + p.string());
  return os;
}

void write_json(const fs::path& p, const json& j) {
  auto os = open_out(p);
  os << j.dump(2) << "\n";
}

std::vector<double> log_spaced(double lo, double hi, std::size_t n) {
  if (!(lo > 0 && hi > lo && n >= 2)) throw ConfigError("log grid needs 0 < lo < hi and at least 2 points");
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i)
    g[i] = std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * static_cast<double>(i) /
                                       static_cast<double>(n - 1));
  return g;
}

// ---- subcommands -------------------------------------------------------------

void cmd_derive(Run& run) {
  aaf_derived d;
  check(aaf_derive(&run.cfg.params(), &d), "derive");
  json j;
  j["preset"] = run.cfg.preset_name();
  j["Delta"] = d.delta;
  j["u"] = d.u;
  j["v"] = d.v;
  j["beta0"] = d.beta0;
  j["beta"] = d.beta;
  j["c0"] = d.c0;
  j["c2"] = d.c2;
  j["kappa"] = d.kappa;
  write_json(run.artifact("derived.json"), j);
  run.summary << "Delta=" << fmt(d.delta) << " u=" << fmt(d.u) << " v=" << fmt(d.v)
              << " beta0=" << fmt(d.beta0) << " beta=" << fmt(d.beta) << " c0=" << fmt(d.c0)
              << " c2=" << fmt(d.c2) << " kappa=" << fmt(d.kappa) << "\n";
}

CheckLine run_library_check(const Run& run, int id, bool smoke) {
  char* text = nullptr;
  check(aaf_run_check(id, smoke ? 1 : 0, run.seed, run.threads, &text), "check");
  const json j = json::parse(text);
  aaf_free_string(text);
  return {"criterion " + std::to_string(id) + ": " + j.at("name").get<std::string>(),
          j.at("anchor").get<std::string>(), j.at("pass").get<bool>(), j.at("values"),
          j.contains("note") ? j.at("note").get<std::string>() : ""};
}

void cmd_local_check(Run& run) {
  for (int id = 1; id <= 5; ++id) run.add_check(run_library_check(run, id, false));
  // passage table for the configured model
  SystemHandle sys(run.cfg.params());
  const double eps = run.cfg.params().eps;
  const double eta = run.cfg.real("local", "eta_frac") * eps;
  const std::size_t n = run.cfg.uint("local", "xi_points");
  const double T_max = run.cfg.real("local", "T_max");
  if (!(eta > 0 && eta <= eps)) throw ConfigError("local.eta_frac must lie in (0, 1]");
  auto os = open_out(run.artifact("passage.csv"));
  os << "xi,eta,T,theta_w\n";
  for (double xi : log_spaced(0.5 * eta * 1e-6, 0.5 * eta, std::max<std::size_t>(2, n))) {
    double T = 0, theta = 0;
    check(aaf_passage(sys.p, xi, eta, &T, &theta), "passage");
    if (T > T_max) continue;
    os << fmt(xi) << "," << fmt(eta) << "," << fmt(T) << "," << fmt(theta) << "\n";
  }
}

void cmd_tails(Run& run) {
  const Config& c = run.cfg;
  SystemHandle sys(c.params());
  const std::uint64_t n = c.uint("tails", "n");
  std::vector<aaf_return> recs(n);
  check(aaf_sample_returns(sys.p, run.seed, c.uint("tails", "burn"), n, recs.data()), "sample_returns");
  if (c.boolean("tails", "write_returns")) {
    check(aaf_write_returns_binary(run.artifact("returns.bin").c_str(), recs.data(), n), "returns.bin");
    check(aaf_write_returns_csv(run.artifact("returns.csv").c_str(), recs.data(), n), "returns.csv");
  }
  std::vector<double> tau(n);
  for (std::size_t i = 0; i < n; ++i) tau[i] = recs[i].tau;
  recs.clear();
  recs.shrink_to_fit();

  aaf_derived d;
  check(aaf_derive(&c.params(), &d), "derive");
  const double k_frac = c.real("tails", "k_frac");
  aaf_tail_fit hill{}, loglog{};
  check(aaf_tail_fit_run(tau.data(), n, AAF_TAIL_HILL, k_frac, &hill), "hill");
  check(aaf_tail_fit_run(tau.data(), n, AAF_TAIL_LOGLOG, k_frac, &loglog), "loglog");
  auto fit_json = [](const aaf_tail_fit& f) {
    json j;
    j["beta_hat"] = f.beta_hat;
    j["c_hat"] = f.c_hat;
    j["k_frac"] = f.k_frac;
    j["k"] = f.k;
    j["stderr"] = f.stderr_beta;
    j["threshold"] = f.threshold;
    return j;
  };
  json tj;
  tj["n"] = n;
  tj["beta_target"] = d.beta;
  tj["hill"] = fit_json(hill);
  tj["loglog"] = fit_json(loglog);
  write_json(run.artifact("tail_fit.json"), tj);

  // survival curve, one row per grid point
  const std::size_t pts = c.uint("tails", "survival_points");
  std::vector<double> t(pts), s(pts);
  std::size_t count = 0;
  check(aaf_survival_curve(tau.data(), n, pts, t.data(), s.data(), &count), "survival");
  {
    auto os = open_out(run.artifact("survival.csv"));
    os << "t,survival\n";
    for (std::size_t i = 0; i < count; ++i) os << fmt(t[i]) << "," << fmt(s[i]) << "\n";
  }
  // Hill stability plot: beta_hat against k_frac
  {
    auto os = open_out(run.artifact("hill_stability.csv"));
    os << "k_frac,k,beta_hat,stderr\n";
    const double lo = std::max(1e-5, 10.0 / static_cast<double>(n));
    if (lo < 0.1)
      for (double kf : log_spaced(lo, 0.1, std::max<std::size_t>(2, c.uint("tails", "stability_points")))) {
        aaf_tail_fit f{};
        if (aaf_tail_fit_run(tau.data(), n, AAF_TAIL_HILL, kf, &f) != AAF_OK) continue;
        os << fmt(f.k_frac) << "," << f.k << "," << fmt(f.beta_hat) << "," << fmt(f.stderr_beta) << "\n";
      }
  }
  json v;
  v["beta"] = d.beta;
  v["hill_beta"] = hill.beta_hat;
  v["loglog_beta"] = loglog.beta_hat;
  v["k_frac"] = hill.k_frac;
  run.add_check({"tail exponent: Hill within 10% of beta", aaf_check_anchor(6),
                 std::abs(hill.beta_hat / d.beta - 1.0) <= 0.10, v, ""});
}

void cmd_limits(Run& run) {
  const Config& c = run.cfg;
  SystemHandle sys(c.params());
  aaf_derived d;
  check(aaf_derive(&c.params(), &d), "derive");
  aaf_limit_options o;
  aaf_limit_options_default(&o);
  const std::string kind = c.str("limits", "case");
  if (kind == "auto") {
    const double ratio = d.beta / d.kappa;
    o.kind = std::abs(ratio - 2.0) < 1e-12 ? AAF_LIMIT_NONSTD_CLT : ratio > 2.0 ? AAF_LIMIT_CLT : AAF_LIMIT_STABLE;
  } else if (aaf_limit_case_from_name(kind.c_str(), &o.kind) != AAF_OK) {
    throw ConfigError("limits.case: " + std::string(aaf_last_error()));
  }
  o.T_flow = c.real("limits", "T");
  o.n_samples = c.uint("limits", "n");
  o.seed = run.seed;
  o.ks_threshold = c.real("limits", "ks_threshold");
  o.n_centering = c.uint("limits", "n_centering");
  o.n_burn = c.uint("limits", "n_burn");
  o.sample_burn = c.uint("limits", "sample_burn");
  o.var_tolerance = c.real("limits", "var_tolerance");
  o.alpha_tolerance = c.real("limits", "alpha_tolerance");
  o.threads = run.threads;

  aaf_limit_report r{};
  std::vector<double> z(o.n_samples);
  check(aaf_limit_experiment(sys.p, &o, &r, z.data()), "limit_experiment");

  json j;
  j["case"] = aaf_limit_case_name(r.kind);
  j["T"] = r.T_flow;
  j["samples"] = r.sample_count;
  j["b"] = r.b;
  j["c_tail"] = r.c_tail;
  j["beta"] = r.beta;
  j["kappa"] = r.kappa;
  j["psi_star"] = r.psi_star;
  j["tau_star"] = r.tau_star;
  j["centering"] = r.centering;
  j["ks_distance"] = r.ks_distance;
  j["ks_threshold"] = r.ks_threshold;
  j["degenerate"] = r.degenerate != 0;
  if (r.kind == AAF_LIMIT_STABLE) {
    j["reflected"] = r.reflected != 0;
    j["alpha_fit"] = r.alpha;
    j["scale_fit"] = r.scale;
    j["location_fit"] = r.location;
    j["alpha_target"] = r.alpha_target;
  } else {
    j["sigma2"] = r.sigma2;
    j["sigma2_gk"] = r.sigma2_gk;
    j["sigma2_direct"] = r.sigma2_direct;
  }
  j["pass"] = r.pass != 0;
  write_json(run.artifact("limit_report.json"), j);
  {
    auto os = open_out(run.artifact("limit_samples.csv"));
    os << "index,normalized\n";
    for (std::size_t i = 0; i < z.size(); ++i) os << i << "," << fmt(z[i]) << "\n";
  }
  if (!r.degenerate) {
    // QQ against the reference law; the first and last rows carry the sample extremes
    std::vector<double> sorted = z;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    const std::size_t q = std::min<std::size_t>(n, std::max<std::size_t>(2, c.uint("limits", "qq_points")));
    auto os = open_out(run.artifact("qq.csv"));
    os << "p,sample_quantile,reference_quantile\n";
    for (std::size_t k = 0; k < q; ++k) {
      const std::size_t i = (k * (n - 1)) / (q - 1);
      const double p = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
      double ref = 0;
      check(aaf_limit_reference_quantile(&r, p, &ref), "reference quantile");
      os << fmt(p) << "," << fmt(sorted[i]) << "," << fmt(ref) << "\n";
    }
  }
  const int anchor_id = r.kind == AAF_LIMIT_CLT ? 8 : r.kind == AAF_LIMIT_STABLE ? 9 : 10;
  json v;
  v["ks_distance"] = r.ks_distance;
  v["ks_threshold"] = r.ks_threshold;
  if (r.kind == AAF_LIMIT_STABLE) v["alpha_fit"] = r.alpha;
  if (r.kind == AAF_LIMIT_CLT) {
    v["sigma2_gk"] = r.sigma2_gk;
    v["sigma2_direct"] = r.sigma2_direct;
  }
  run.add_check({std::string("limit law (") + aaf_limit_case_name(r.kind) + ")", aaf_check_anchor(anchor_id),
                 r.pass != 0, v, r.degenerate ? "degenerate sample" : ""});
}

void cmd_pressure(Run& run) {
  const Config& c = run.cfg;
  SystemHandle sys(c.params());
  aaf_ulam_options uo;
  aaf_ulam_options_default(&uo);
  uo.resolution = static_cast<int>(c.uint("pressure", "resolution"));
  uo.samples_per_box = static_cast<int>(c.uint("pressure", "samples_per_box"));
  uo.strip_samples = c.uint("pressure", "strip_samples");
  uo.r_max = c.uint("pressure", "r_max");
  uo.level_ratio = c.real("pressure", "level_ratio");
  uo.seed = run.seed;
  uo.threads = run.threads;
  UlamHandle op;
  check(aaf_ulam_build(sys.p, &uo, &op.p), "ulam_build");
  aaf_ulam_info info;
  check(aaf_ulam_get_info(op.p, &info), "ulam_info");

  const auto u_grid = log_spaced(c.real("pressure", "u_lo"), c.real("pressure", "u_hi"),
                                 c.uint("pressure", "u_points"));
  const double s = c.real("pressure", "s");
  std::vector<double> lambda(u_grid.size());
  aaf_eigen_fit fit{};
  check(aaf_ulam_eigen_curve(op.p, u_grid.data(), u_grid.size(), s, c.real("pressure", "fit_lo"),
                             c.real("pressure", "fit_hi"), lambda.data(), &fit),
        "eigen_curve");
  std::vector<double> pi;
  const std::uint64_t pi_n = c.uint("pressure", "pi_returns");
  if (pi_n > 0) {
    pi.resize(u_grid.size());
    check(aaf_pi_curve(sys.p, u_grid.data(), u_grid.size(), run.seed + 7919, 10'000, pi_n, pi.data()), "pi");
  }
  {
    auto os = open_out(run.artifact("eigen_curve.csv"));
    os << "u,s,lambda,one_minus_lambda,pi_u\n";
    for (std::size_t i = 0; i < u_grid.size(); ++i)
      os << fmt(u_grid[i]) << "," << fmt(s) << "," << fmt(lambda[i]) << "," << fmt(1.0 - lambda[i]) << ","
         << (pi.empty() ? std::string() : fmt(pi[i])) << "\n";
  }

  const auto s_grid = log_spaced(c.real("pressure", "s_lo"), c.real("pressure", "s_hi"),
                                 c.uint("pressure", "s_points"));
  std::vector<aaf_relpres_row> rows(s_grid.size());
  aaf_relpres_summary sum{};
  check(aaf_ulam_relpres(op.p, s_grid.data(), s_grid.size(), rows.data(), &sum), "relpres");
  json rj;
  rj["tau_hat"] = sum.tau_hat;
  rj["psi_hat"] = sum.psi_hat;
  rj["phase_slope"] = sum.phase_slope;
  rj["phase_prefactor"] = sum.phase_prefactor;
  rj["gap_decreasing"] = sum.gap_decreasing != 0;
  json arr = json::array();
  for (const auto& r : rows) arr.push_back({{"s", r.s}, {"u0", r.u0}, {"pbar", r.pbar}, {"ratio", r.ratio}});
  rj["rows"] = arr;
  json ulam;
  ulam["resolution"] = uo.resolution;
  ulam["size"] = info.size;
  ulam["nnz"] = info.nnz;
  ulam["truncated_mass"] = info.truncated_mass;
  ulam["leaked_mass"] = info.leaked_mass;
  ulam["strip_fraction"] = info.strip_fraction;
  ulam["max_level_osc"] = info.max_level_osc;
  ulam["unreachable"] = info.unreachable;
  rj["operator"] = ulam;
  json ef;
  ef["tau_hat"] = fit.tau_hat;
  ef["slope"] = fit.slope;
  ef["prefactor"] = fit.prefactor;
  ef["fit_lo"] = fit.fit_lo;
  ef["fit_hi"] = fit.fit_hi;
  ef["fit_rms"] = fit.fit_rms;
  rj["eigen_fit"] = ef;
  write_json(run.artifact("relpres.json"), rj);

  // the ratio at the s point nearest 1e-3, and the gap trend
  std::size_t k = 0;
  for (std::size_t i = 0; i < rows.size(); ++i)
    if (std::abs(std::log(rows[i].s / 1e-3)) < std::abs(std::log(rows[k].s / 1e-3))) k = i;
  json v;
  v["s"] = rows[k].s;
  v["ratio"] = rows[k].ratio;
  v["gap_decreasing"] = sum.gap_decreasing != 0;
  run.add_check({"pressure ratio u0 tau_hat / pbar within 5% of 1", aaf_check_anchor(12),
                 std::abs(rows[k].ratio - 1.0) <= 0.05 && sum.gap_decreasing != 0, v, ""});
}

void cmd_full_report(Run& run) {
  const std::string scale = run.cfg.str("report", "scale");
  if (scale != "full" && scale != "smoke") throw ConfigError("report.scale must be full or smoke");
  for (int id : parse_check_list(run.cfg.str("report", "checks"))) {
    const auto t0 = std::chrono::steady_clock::now();
    run.add_check(run_library_check(run, id, scale == "smoke"));
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cerr << run.checks.back().name << (run.checks.back().pass ? " PASS" : " FAIL") << " (" << fmt(secs)
              << " s)\n";
  }
}

// ---- driver ------------------------------------------------------------------

int execute(Run& run, const std::function<void(Run&)>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  std::error_code ec;
  fs::create_directories(run.out, ec);
  if (ec) throw RuntimeError("cannot create " + run.out.string() + ": " + ec.message());
  body(run);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  boost::crc_32_type crc;
  const std::string canon = run.cfg.canonical();
  crc.process_bytes(canon.data(), canon.size());
  char hash[16];
  std::snprintf(hash, sizeof hash, "%08x", crc.checksum());

  bool all_pass = true;
  json checks = json::array();
  for (const CheckLine& c : run.checks) {
    all_pass = all_pass && c.pass;
    json j;
    j["name"] = c.name;
    j["anchor"] = c.anchor;
    j["pass"] = c.pass;
    j["values"] = c.values;
    if (!c.note.empty()) j["note"] = c.note;
    checks.push_back(j);
  }
  json m;
  m["subcommand"] = run.subcommand;
  m["config_hash"] = std::string("crc32:") + hash;
  m["code_version"] = aaf_version();
  m["seed"] = run.seed;
  m["threads"] = run.threads;
  m["wall_time_s"] = wall;
  m["config"] = run.cfg.to_json();
  m["checks"] = checks;
  m["artifacts"] = run.artifacts;
  m["all_pass"] = all_pass;
  write_json(run.out / "manifest.json", m);

  std::ostringstream txt;
  txt << "aaflow " << run.subcommand << "  preset " << run.cfg.preset_name() << "  seed " << run.seed
      << "  threads " << run.threads << "  config crc32:" << hash << "\n";
  txt << run.summary.str();
  for (const CheckLine& c : run.checks) {
    txt << (c.pass ? "PASS  " : "FAIL  ") << c.name << "  [" << c.anchor << "]";
    for (const auto& [k, v] : c.values.items()) txt << " " << k << "=" << v.dump();
    if (!c.note.empty()) txt << "  (" << c.note << ")";
    txt << "\n";
  }
  for (const std::string& a : run.artifacts) txt << "artifact " << (run.out / a).string() << "\n";
  {
    auto os = open_out(run.out / "summary.txt");
    os << txt.str();
  }
  std::cout << txt.str();

  if (run.subcommand == "full-report") return all_pass ? kExitOk : kExitCheckFailed;
  if (run.strict && !all_pass) return kExitCheckFailed;
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"aaflow: almost Anosov flow experiments"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path, out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  bool strict = false;
  app.add_option("--config", config_path, "INI configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "master seed (overrides run.seed)");
  app.add_option("--threads", threads, "worker threads (overrides run.threads)")->check(CLI::PositiveNumber);
  app.add_option("--out", out_dir, "output directory (overrides run.out)");
  app.add_flag("--strict", strict, "exit 3 when any tolerance check fails");

  const std::vector<std::pair<std::string, std::function<void(Run&)>>> subs = {
      {"derive", cmd_derive},       {"local-check", cmd_local_check}, {"tails", cmd_tails},
      {"limits", cmd_limits},       {"pressure", cmd_pressure},       {"full-report", cmd_full_report}};
  const std::map<std::string, std::string> help = {
      {"derive", "derived constants of the model"},
      {"local-check", "local passage checks and a passage table"},
      {"tails", "return stream, tail fits and survival curve"},
      {"limits", "limit-law experiment for the flow Birkhoff sums"},
      {"pressure", "twisted Ulam operator: eigen-curve and pressure relation"},
      {"full-report", "every acceptance check; nonzero exit iff one fails"}};
  for (const auto& [name, fn] : subs) app.add_subcommand(name, help.at(name));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    Run run;
    for (const auto& [name, fn] : subs)
      if (app.got_subcommand(name)) run.subcommand = name;
    run.cfg.load(config_path);
    if (seed) run.cfg.set("run", "seed", std::to_string(*seed), "flag");
    if (threads) run.cfg.set("run", "threads", std::to_string(*threads), "flag");
    if (!out_dir.empty()) run.cfg.set("run", "out", out_dir, "flag");
    run.seed = run.cfg.uint("run", "seed");
    run.threads = static_cast<unsigned>(std::max<std::uint64_t>(1, run.cfg.uint("run", "threads")));
    run.out = run.cfg.str("run", "out");
    run.strict = strict;
    for (const auto& [name, fn] : subs)
      if (name == run.subcommand) return execute(run, fn);
    return kExitConfig;
  } catch (const ConfigError& e) {
    std::cerr << "aaflow: config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "aaflow: " << e.what() << "\n";
    return kExitRuntime;
  }
}
