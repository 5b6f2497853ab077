#pragma once

#include <string>
#include <vector>

#include "catsim/meanfield.hpp"
#include "json.hpp"

namespace catsim {

// Radiated power vs drive amplitude. Drive and power carry arbitrary gains;
// power is already vacuum subtracted.
struct CalibCurve {
  std::vector<double> drive;
  std::vector<double> power;
  int averages = 1;
  double T_m = 0.0;

  void validate() const;
};

// CSV with header `drive,power`.
CalibCurve read_calib_curve(const std::string& path);

// x = |eps_d g2|, y = |alpha g2|^2, both in (rad/s)^2.
struct RescaledCurve {
  std::vector<double> x;
  std::vector<double> y;
  double x_c = 0.0;  // kappa_a kappa_b / 8
  double drive_scale = 0.0;  // x per raw drive unit
  double power_scale = 0.0;  // y per raw power unit
  double tail_r2 = 0.0;
  int tail_points = 0;
};

// Linear fit through the last tail_points samples, then x and y scaled so the
// tail has slope 1 and crosses zero at kappa_a kappa_b / 8.
RescaledCurve rescale_axes(const CalibCurve& c, double kappa_a, double kappa_b, int tail_points = 3,
                           double min_r2 = 0.99);

// Quantum model in the normalized coordinates X = x/x_c, Y = y/x_c. The curve
// depends on g2 only through r = kappa_a kappa_b / (4 g2^2) = kappa_a/kappa2.
struct NormalizedModelOptions {
  int dim = 0;  // 0: PoissonTail at the classical nbar, at least 6 sqrt(r) + 20
  double dim_scale = 1.0;  // multiplies automatic dims (truncation check)
};

int normalized_model_dim(double X, double r, const NormalizedModelOptions& opt = {});
double normalized_model(double X, double r, const NormalizedModelOptions& opt = {});

struct KappaBox {
  double kappa_ai_lo = kTwoPi * 15e3, kappa_ai_hi = kTwoPi * 22e3;
  double kappa_ac_lo = kTwoPi * 39e3, kappa_ac_hi = kTwoPi * 42e3;
  double kappa_b_lo = kTwoPi * 13e6, kappa_b_hi = kTwoPi * 20e6;
};

struct FitG2Options {
  double X_lo = 0.5, X_hi = 3.0;  // fit domain in units of the critical drive
  double r_min = 1.0, r_max = 2048.0;
  int brent_bits = 9;
  int max_iter = 60;
  int max_outer = 6;
  double r_rel_tol = 5e-3;  // change of ln r between outer passes
  NormalizedModelOptions model;
  bool with_interval = true;
  KappaBox box;
  bool check_truncation = true;  // re-evaluate the optimum with 25% larger dims
};

struct G2Corner {
  double kappa_a = 0.0;
  double kappa_b = 0.0;
  double g2 = 0.0;
};

struct FitG2Result {
  double g2 = 0.0;  // rad/s
  double r = 0.0;
  double lo = 0.0, hi = 0.0;  // rad/s, over the kappa box corners
  std::vector<G2Corner> corners;
  double residual = 0.0;  // sum of squared Y residuals over the fit domain
  int points = 0;
  int evaluations = 0;
  double r_seed = 0.0;
  int outer_iterations = 0;
  double tail_X0 = 1.0, tail_slope = 1.0;  // model tail line at r
  double truncation_change = -1.0;  // max |Delta Y| of the model with 25% larger dims
};

// Least-squares objective of a rescaled curve at r. The model is normalized by
// its own tail line through the same tail points as the data.
double fit_g2_objective(const RescaledCurve& c, double r, const FitG2Options& opt = {});
FitG2Result fit_g2(const RescaledCurve& c, double kappa_a, double kappa_b, const FitG2Options& opt = {});
double g2_from_ratio(double r, double kappa_a, double kappa_b);
nlohmann::json fit_g2_report(const FitG2Result& f, double kappa_a, double kappa_b, const FitG2Options& opt);

double kb_from_edge_slope(double slope, double kappa_a);

double excess_loss(double kappa_ai, double kappa2, double nbar);
// Same quantity written with g2 and kappa_b: kappa_ai + 8 nbar g2^2 / kappa_b.
double excess_loss_g2(double kappa_ai, double g2, double kappa_b, double nbar);

// Memory coupled dispersively to a driven qubit (memory first, qubit second).
struct EfficiencyRigSpec {
  double T1 = 19.3e-6;
  double T2 = 24.3e-6;
  double chi = kTwoPi * 1.75e6;
  double kappa_c = kTwoPi * 38e3;
  double kappa_i = kTwoPi * 17e3;
  std::vector<double> omega_a;  // memory drives, rad/s
  double omega_q = 0.0;
  std::vector<double> delta_q;  // qubit detunings, rad/s
  int mem_dim = 0;  // 0: automatic from the largest drive
  int qubit_dim = 2;

  void validate() const;
  double kappa_a() const { return kappa_c + kappa_i; }
  double kappa_1() const { return 1.0 / T1; }
  double kappa_phi() const { return 1.0 / T2 - 0.5 / T1; }
};

// H = Delta_q q^dag q - chi a^dag a q^dag q + Omega_a (a + a^dag) + Omega_q (q + q^dag),
// collapse sqrt(kappa_a) a, sqrt(kappa_1) q, sqrt(kappa_phi) q^dag q.
ModelSpec rig_model(const EfficiencyRigSpec& rig, double omega_a, double delta_q, int mem_dim);
int rig_mem_dim(const EfficiencyRigSpec& rig, double omega_a);

struct NumberSplitSurface {
  std::vector<double> delta_q;
  std::vector<double> omega_a;
  Eigen::MatrixXcd a;  // rows follow omega_a, columns delta_q
  Eigen::MatrixXd qubit_excitation;
  Eigen::MatrixXd nbar;
  int mem_dim = 0;
};

NumberSplitSurface qubit_numbersplit(const EfficiencyRigSpec& rig);

// Detunings of local maxima of the qubit excitation along one drive row.
std::vector<double> numbersplit_peaks(const NumberSplitSurface& s, int row, double min_height = 0.0);

// Measured spectroscopy S_t(s_in, Delta_q) = A <a>(Delta_q, Omega_a = c s_in).
struct RigData {
  std::vector<double> s_in;
  std::vector<double> delta_q;
  Eigen::MatrixXcd s_t;  // rows follow s_in
};

struct RigFit {
  double drive_scale = 0.0;  // c
  cplx A{0.0, 0.0};
  std::vector<double> nbar;  // per s_in, qubit undriven
  double residual = 0.0;
};

// c from the number-split spectrum at the largest drive, A pinned there; the
// remaining rows only receive photon numbers.
RigFit fit_rig(const EfficiencyRigSpec& rig, const RigData& data, double nbar_lo = 0.05, double nbar_hi = 30.0);

}  // namespace catsim
