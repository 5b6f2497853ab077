#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "catsim/models.hpp"

namespace catsim {

enum class BranchTag { Vacuum, Bright };

struct SteadyBranch {
  cplx alpha{0.0, 0.0};
  cplx beta{0.0, 0.0};
  double nbar = 0.0;
  cplx z{0.0, 0.0};
  BranchTag tag = BranchTag::Vacuum;
};

// All semi-classical fixed points: the vacuum plus +-alpha for every positive
// root, i.e. 1, 3 or 5 solutions.
struct BranchSet {
  std::vector<SteadyBranch> solutions;
  SteadyBranch selected;  // largest field in the memory
};

double nbar_zero_detuning(cplx eps_d, cplx g2, double kappa_a, double kappa_b);
// |eps_d| at which nbar_zero_detuning leaves zero.
double critical_drive(cplx g2, double kappa_a, double kappa_b);
cplx z_aux(const TwoModeParams& p);
double nbar_detuned(const TwoModeParams& p);
BranchSet steady_branches(const TwoModeParams& p);
// max |(i kappa_a/2 + Delta_a) - 2 g2 beta e^{-2i theta}| and the buffer equation residual
double branch_residual(const TwoModeParams& p, const SteadyBranch& b);

// Odd point count, symmetric about zero, so the centre sample is exactly 0.
std::vector<double> symmetric_grid(double half_width, int n);

struct NbarMap {
  std::vector<double> delta_a;
  std::vector<double> delta_b;
  Eigen::MatrixXd nbar;  // rows follow delta_b, columns follow delta_a
};

NbarMap nbar_map(const TwoModeParams& base, const std::vector<double>& delta_a, const std::vector<double>& delta_b);
// Header row: Delta_a grid; first column: Delta_b grid; body: nbar.
void write_map_csv(std::ostream& os, const NbarMap& m, double axis_scale = 1.0);

struct EdgeCurve {
  std::string name;
  std::vector<double> delta_a;
  std::vector<double> delta_b;
};

struct DiamondEdges {
  double product = 0.0;  // |eps_d g2|
  double kappa_a = 0.0;
  double kappa_b = 0.0;
  std::vector<EdgeCurve> curves;  // top-right, bottom-left (linear); two curved edges

  double linear_slope() const { return -kappa_b / kappa_a; }
  // sign(Delta_a Delta_b - kappa_a kappa_b / 4): +1 positive domain, -1 negative
  int domain(double da, double db) const;
  // Analytic bright-branch existence.
  bool inside(double da, double db) const;
};

DiamondEdges diamond_edges(double product, double kappa_a, double kappa_b, int samples = 201);

// Slope dDelta_b/dDelta_a of the top-right edge estimated from a map's
// bright/dark boundary.
double edge_slope_from_map(const NbarMap& m);

struct FlowResult {
  std::vector<double> times;
  std::vector<cplx> alpha;
  std::vector<cplx> beta;
};

FlowResult meanfield_flow(const TwoModeParams& p, cplx alpha0, cplx beta0, double T, int samples = 201,
                          const OdeOptions& opt = {});

struct QuantumCurveOptions {
  int dim = 0;  // 0: choose per point from the truncation policy
  TruncationPolicy policy = TruncationPolicy::FourTimesMean;
  int min_dim = 30;
  int margin = 0;
  bool check_kernel = true;
};

struct QuantumClassicalCurve {
  std::vector<double> eps_d;
  std::vector<double> classical;
  std::vector<double> quantum;
  std::vector<int> dims;
};

QuantumClassicalCurve quantum_vs_classical_curve(cplx g2, double kappa_a, double kappa_b,
                                                 const std::vector<double>& eps_d,
                                                 const QuantumCurveOptions& opt = {});
double quantum_nbar(const ReducedParams& p, const QuantumCurveOptions& opt, int* dim_used = nullptr);

}  // namespace catsim
