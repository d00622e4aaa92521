#pragma once

#include <array>
#include <map>
#include <string>
#include <string_view>

namespace aaf {

// theta(x, y) = scale * (px x^2 + qy y^2)^(rho/2). Homogeneous of degree rho
// and nonvanishing on both axes whenever scale, px, qy are nonzero.
struct HomogeneousSpec {
  double rho = 2.0;
  double scale = 1.0;
  double px = 1.0;
  double qy = 1.0;

  double theta0() const;    // theta(1, 0)
  double thetaInf() const;  // theta(0, 1)
  // theta(1, M), the profile along a ray of slope M
  double profile(double M) const;
};

// psi = -scale * |q|^rho inside the chart, zero outside. The induced value
// over one return is offset - psi_0 + flat * tau.
struct PotentialSpec {
  double offset = 20.0;  // C'
  double scale = 1.0;    // C
  double rho = 0.0;
  double flat = 0.0;     // constant flow density, for the degenerate case

  HomogeneousSpec chart_term() const { return {rho, scale, 1.0, 1.0}; }
};

struct FlowParams {
  double a0 = 1.0, a2 = 2.0, b0 = 1.0, b2 = 1.0;
  // chart half-width; also the exit transversal x = zeta0. 0.25 is close to the
  // largest chart whose exits do not wrap back into it on the torus.
  double eps = 0.25;
  HomogeneousSpec w{2.0, 0.1, 1.0, 1.0};
  PotentialSpec psi{};
};

struct DerivedConstants {
  double a0, a2, b0, b2;
  double delta;
  double u, v;
  double beta0, beta;
  double c0, c2;
  double kappa;
  // exponents of the level-set reduction
  double e;  // 1/(2 beta0) + 1/(2 beta)
  double g;  // 1 - e = 2/(u+v+2)
};

DerivedConstants derive_constants(const FlowParams& p);

// Derivation without the finite-measure guard; used by tests of the Delta < 0
// formula branch.
DerivedConstants derive_constants_unchecked(const FlowParams& p);

std::array<double, 3> vector_field(const FlowParams& p, double x, double y, double z);

double first_integral(const DerivedConstants& dc, double x, double y);

double homogeneous_eval(const HomogeneousSpec& spec, double x, double y);

// Largest |w| over the closed chart box.
double sup_w_on_chart(const FlowParams& p);

void validate_homogeneous(const HomogeneousSpec& spec, bool allow_negative_rho);
void validate_params(const FlowParams& p);

// Named presets: P_STABLE, P_BOUNDARY, P_CLT.
FlowParams preset(std::string_view name);
bool is_preset_name(std::string_view name);

// Flat key-value encoding of the [model] section.
using KeyValues = std::map<std::string, std::string>;
FlowParams params_from_keys(const KeyValues& kv);
KeyValues params_to_keys(const FlowParams& p);
const std::array<std::string_view, 14>& model_keys();

}  // namespace aaf
