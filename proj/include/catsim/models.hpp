#pragma once

#include "catsim/liouville.hpp"

namespace catsim {

constexpr double kTwoPi = 6.283185307179586476925286766559;

struct ReducedParams {
  cplx eps2{0.0, 0.0};
  double kappa2 = 0.0;
  double kappa_a = 0.0;
  double delta_a = 0.0;
  double kerr = 0.0;  // induced Kerr Delta_b|gamma|^2; zero at Delta_b = 0
};

struct TwoModeParams {
  cplx g2{0.0, 0.0};
  cplx eps_d{0.0, 0.0};
  double delta_a = 0.0;
  double delta_b = 0.0;
  double kappa_a = 0.0;
  double kappa_b = 0.0;
};

struct KerrParams {
  double K = 0.0;
  double eps2 = 0.0;
  double kappa_a = 0.0;
};

enum class TruncationPolicy {
  FourTimesMean,  // dim >= 4 * expected nbar
  PoissonTail,  // Poisson tail mass beyond dim at the expected nbar < 1e-8
};

// Classical pointer-state photon number (2/kappa2)(|eps2| - kappa_a/4), clipped at 0.
double expected_nbar(const ReducedParams& p);
// Smallest dim allowed by the given policy for a state with mean photon number nbar.
int min_dim(double nbar, TruncationPolicy policy);

// H = -Delta_a a^dag a + i eps2 a^dag^2 - i eps2^* a^2 (+ kerr a^dag^2 a^2),
// collapse sqrt(kappa2) a^2 and sqrt(kappa_a) a.
ModelSpec reduced_model(const ReducedParams& p, int dim, TruncationPolicy policy = TruncationPolicy::FourTimesMean);

// dims = {memory, buffer}.
ModelSpec two_mode_model(const TwoModeParams& p, const Dims& dims);

struct AdiabaticResult {
  cplx gamma{0.0, 0.0};
  cplx eps2{0.0, 0.0};
  double kappa2 = 0.0;
  double kerr = 0.0;
};

// gamma = g2/(Delta_b + i kappa_b/2); i eps2 a^dag^2 = -eps_d gamma a^dag^2.
AdiabaticResult adiabatic_map(cplx g2, cplx eps_d, double kappa_b, double delta_b);
ReducedParams reduced_from_two_mode(const TwoModeParams& p);

// H = i eps2 (a^dag^2 - a^2) - (K/2) a^dag^2 a^2, collapse sqrt(kappa_a) a.
ModelSpec kerr_model(const KerrParams& p, int dim);
double kerr_meanfield_nbar(const KerrParams& p);
double two_photon_meanfield_nbar(double eps2, double kappa2, double kappa_a);

struct AsymptoteFit {
  double slope = 0.0;
  double intercept_x = 0.0;  // drive where the asymptote reaches nbar = 0
  bool through_origin = false;
};

// Straight line through the large-drive tail of an nbar(eps2) curve; the
// asymptote passes through the origin when |intercept_x| < origin_tol.
AsymptoteFit fit_asymptote(const std::vector<double>& eps2, const std::vector<double>& nbar, int tail_points,
                           double origin_tol);

enum class FluxConvention {
  SigmaMinusHalfPi,  // phi_Sigma = -pi/2: hbar g2 = -1/2 E_J eps_p upsilon^2 phi_b^3
  SigmaPlusHalfPi,  // phi_Sigma = +pi/2: opposite sign
};

struct AtsParams {
  double E_C = 0.0;  // all energies as E/h in Hz
  double E_L = 0.0;
  double E_J = 0.0;
  double dE_J = 0.0;
  double upsilon = 0.0;
  double omega_a0 = 0.0;  // rad/s
};

struct CircuitDerived {
  double phi_b = 0.0;
  double omega_b0 = 0.0;  // rad/s
  double g2 = 0.0;  // rad/s
};

CircuitDerived circuit_derived(const AtsParams& p, double eps_p, FluxConvention conv = FluxConvention::SigmaMinusHalfPi);

}  // namespace catsim
