#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "model.hpp"

namespace aaf {

// Neutral-neighbourhood data shared by all semi-analytic routines: the
// constants, the exit transversal x = zeta0 and the vertical perturbation w.
struct LocalModel {
  DerivedConstants dc;
  double zeta0;
  HomogeneousSpec w;

  static LocalModel from(const FlowParams& p);
};

struct LevelCoords {
  double L;
  double M;
};

LevelCoords to_level(const DerivedConstants& dc, double x, double y);
// x reconstructed from (L, M); y = M x.
double x_from_level(const DerivedConstants& dc, const LevelCoords& lc);

struct PassageResult {
  double eta = 0, xi = 0, omega = 0;
  double T = 0;
  double theta = 0;  // Theta(T) for the model's w
  double G = 0;
};

double m_integrand(const DerivedConstants& dc, double M);
// log of the M-integrand times M, as a function of s = log M
double log_m_ds(const DerivedConstants& dc, double s);
// log of the Theta integrand (without the G prefactor) times M
double log_theta_ds(const DerivedConstants& dc, const HomogeneousSpec& th, double s);

// Integral of m over (0, inf) by adaptive quadrature in s = log M.
double m_total(const DerivedConstants& dc);
// Same integral in closed form, B(1/(2 beta0), 1/(2 beta)) / (2 c0^(1/(2 beta)) c2^(1/(2 beta0))).
double m_total_closed(const DerivedConstants& dc);

double log_G(const DerivedConstants& dc, double xi, double eta);
double xi_zero(const DerivedConstants& dc, double eta);
// Limit of omega(eta, T) T^beta0.
double omega_zero(const DerivedConstants& dc, double zeta0, double eta);
// Exit ordinate on x = zeta0 along the level set through (xi, eta).
double exit_omega(const DerivedConstants& dc, double zeta0, double xi, double eta);

// Exact semi-analytic passage: adaptive quadrature, no tables.
PassageResult passage_time(const LocalModel& lm, double xi, double eta);

struct ExitPoint {
  double xi;
  double omega;
};
double min_passage_time(const LocalModel& lm, double eta);
ExitPoint exit_point(const LocalModel& lm, double eta, double T);

// Theta(T) for the passage from height eta lasting T.
double theta_integral(const LocalModel& lm, const HomogeneousSpec& th, double eta, double T);
// G^(rho/2-1) times the theta integrand over [M_lo, M_hi].
double theta_between(const DerivedConstants& dc, const HomogeneousSpec& th, double G,
                     double M_lo, double M_hi);

enum class ThetaRegime { sub2, crit2, super2 };
struct ThetaAsymptotics {
  ThetaRegime regime;
  double C_rho;
  double exponent;  // 1 - rho/2
  // Theta(T) ~ C_rho * T^(1-rho/2), C_rho * log T, or C_rho respectively
  double predict(double T) const;
};
ThetaAsymptotics theta_asymptotic_constant(const DerivedConstants& dc, double zeta0,
                                           const HomogeneousSpec& th, double eta);
const char* regime_name(ThetaRegime r);

// Power-law end behaviour of an s-integrand: f(s) ~ A e^(a s) as s -> -inf and
// f(s) ~ B e^(-b s) as s -> +inf.
struct EndBehaviour {
  double A, a, B, b;
};
EndBehaviour m_ends(const DerivedConstants& dc);
EndBehaviour theta_ends(const DerivedConstants& dc, const HomogeneousSpec& th);

// Antiderivative of a positive s-integrand, tabulated on a uniform grid with
// exact power-law tails outside it. Phi(s) = int_{s_min}^{s} f.
class CumulativeTable {
public:
  CumulativeTable(std::function<double(double)> f, EndBehaviour ends, double s_min = -25.0,
                  double s_max = 25.0, double h = 0.05);
  double operator()(double s) const;
  // s with Phi(s) = target
  double inverse(double target) const;
  double integrand(double s) const { return f_(s); }

private:
  std::function<double(double)> f_;
  EndBehaviour ends_;
  double s_min_, s_max_, h_;
  std::vector<double> F_;
};

struct FastPassage {
  double T = 0;
  double omega = 0;
  double logG = 0;
  double M0 = 0, M1 = 0;
  double theta_w = 0;
  double theta_psi = 0;
  double phi_m0 = 0, phi_w0 = 0, phi_p0 = 0;  // table values at the entry slope
};

// Tabulated passage solver used inside the simulation loop. Agrees with the
// quadrature path to ~1e-12 relative.
class PassageTable {
public:
  PassageTable(const LocalModel& lm, const HomogeneousSpec& psi_term);
  FastPassage passage(double xi, double eta) const;
  // Position (x, y) at time t into the passage, and Theta_w, Theta_psi on [0, t].
  struct Partial {
    double x, y, theta_w, theta_psi;
  };
  Partial partial(const FastPassage& fp, double t) const;
  const LocalModel& model() const { return lm_; }

private:
  LocalModel lm_;
  HomogeneousSpec psi_;
  CumulativeTable m_, tw_, tp_;
};

}  // namespace aaf
