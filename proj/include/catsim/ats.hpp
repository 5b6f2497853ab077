#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "catsim/models.hpp"

namespace catsim {

// Table values for the device (energies E/h in Hz).
AtsParams table_ats_params();

struct FluxPoint {
  double sigma = 0.0;  // phi_Sigma
  double delta = 0.0;  // phi_Delta

  static FluxPoint from_loops(double phi_L, double phi_R) { return {0.5 * (phi_L + phi_R), 0.5 * (phi_L - phi_R)}; }
  double phi_L() const { return sigma + delta; }
  double phi_R() const { return sigma - delta; }
};

// Representative in the cell phi_Sigma in [0, pi], phi_Delta in [-pi/2, pi/2]:
// fp = cell + n_pi (pi, pi) + n_2pi (0, 2 pi), optionally after an inversion
// (which also flips phi -> -phi).
struct ReducedFlux {
  FluxPoint cell;
  int n_pi = 0;
  int n_2pi = 0;
  bool inverted = false;
};

ReducedFlux reduce_flux(const FluxPoint& fp);

// U = E_L phi^2/2 - 2 E_J cos(phi_S) cos(phi + phi_D) + 2 dE_J sin(phi_S) sin(phi + phi_D), in Hz.
double potential(const AtsParams& p, const FluxPoint& fp, double phi);
// Josephson part only, and its phi derivatives of order 0..4.
double josephson(const AtsParams& p, const FluxPoint& fp, double phi, int order = 0);

// Global minimum of U over phi (the one with phi >= 0 on exact ties).
double potential_minimum(const AtsParams& p, const FluxPoint& fp);
// d^2U/dphi^2 at the minimum: the effective inductive energy.
double inductive_energy(const AtsParams& p, const FluxPoint& fp);

// Largest relative violation of the translational and inversion identities at
// (fp, phi); with dE_J = 0 the two extra mirror axes are included.
double symmetry_residual(const AtsParams& p, const FluxPoint& fp, double phi);

// Expansion around (pi/2 + eps, +-pi/2 + delta); which = +1 or -1.
struct SaddleAnalysis {
  int which = 1;
  double inductive = 0.0;  // E_L -+ 2 dE_J
  Eigen::Matrix2d M;  // analytic quadratic form
  double det_M = 0.0;  // closed form
  bool saddle = false;
  Eigen::Matrix2d hessian_numeric;  // second differences of inductive_energy / 2
  double hessian_rel_diff = 0.0;
  double phi_min_rel_diff = 0.0;  // first-order phi_min formula vs numeric minimum at the stencil
};

SaddleAnalysis saddle_analysis(const AtsParams& p, int which, double h = 1e-4);
// First-order displacement of the minimum, +-(2 E_J eps + 2 dE_J delta)/(E_L -+ 2 dE_J).
double saddle_phi_min(const AtsParams& p, int which, double eps, double delta);

struct FluxMapOptions {
  int mem_dim = 15;
  int buf_dim = 15;
  double overlap_min = 0.5;  // below this the mode label is ambiguous
};

struct FluxModes {
  double f_a = 0.0;  // Hz
  double f_b = 0.0;
  double overlap_a = 0.0;
  double overlap_b = 0.0;
  double phi_min = 0.0;
  bool ambiguous = false;
};

// Circuit Hamiltonian in a Fock basis displaced to the potential minimum:
// f_a0 a^dag a + f_b0 b^dag b + U(phi_min + phi_b (b + b^dag + upsilon (a + a^dag))) - U_quadratic.
FluxModes flux_point_modes(const AtsParams& p, const FluxPoint& fp, const FluxMapOptions& opt = {});

struct FluxMap {
  std::vector<double> sigma;
  std::vector<double> delta;
  Eigen::MatrixXd f_a;  // rows follow sigma, columns delta
  Eigen::MatrixXd f_b;
  Eigen::MatrixXi ambiguous;
};

FluxMap flux_map(const AtsParams& p, const std::vector<double>& sigma, const std::vector<double>& delta,
                 const FluxMapOptions& opt = {});
std::vector<double> linear_grid(double lo, double hi, int n);

// Header row: phi_Delta grid; first column: phi_Sigma grid.
void write_flux_csv(std::ostream& os, const FluxMap& m, bool buffer);

struct AtsEnergies {
  double E_L = 0.0;
  double dE_J = 0.0;
  double E_J = 0.0;
};

// Weakly hybridized limit: f_b1,b2 = sqrt(8 E_C (E_L -+ 2 dE_J)), f_bmax = sqrt(8 E_C (E_L + 2 E_J)).
AtsEnergies extract_params(double f_b1, double f_b2, double f_bmax, double E_C);

struct SaddleFrequencies {
  double f_b1 = 0.0, f_b2 = 0.0, f_bmax = 0.0;
};

// quartic = true adds the first-order shift of the Josephson quartic term at each point.
SaddleFrequencies forward_frequencies(double E_C, const AtsEnergies& e, bool quartic = false);
// Inverse of forward_frequencies with quartic = true (fixed point on the shifts).
AtsEnergies extract_params_quartic(double f_b1, double f_b2, double f_bmax, double E_C);

// Fourth-order estimate of the memory self-Kerr from the Josephson term at the
// minimum: K = |U''''| (upsilon phi_b)^4 / 2 in Hz. Indicative only.
struct KerrEstimate {
  double K = 0.0;
  bool indicative = true;
};

KerrEstimate memory_kerr_estimate(const AtsParams& p, const FluxPoint& fp);

}  // namespace catsim
