#pragma once

#include <string>
#include <vector>

#include "catsim/ode.hpp"
#include "catsim/qcore.hpp"

namespace catsim {

// H in rad/s; collapse operators already scaled by sqrt(rate).
struct ModelSpec {
  OperatorMatrix H;
  std::vector<OperatorMatrix> collapse_ops;

  const Dims& dims() const { return H.dims(); }
  void validate() const;
};

enum class Sector { Full, Even, Odd };
const char* to_string(Sector s);

// Column-stacking convention: vec(A rho B) = (B^T kron A) vec(rho).
class Liouvillian {
 public:
  Liouvillian(Dims dims, SparseMat L, bool parity_ok);

  const Dims& dims() const { return dims_; }
  const SparseMat& matrix() const { return L_; }
  long hilbert_side() const { return n_; }
  // True when H commutes with memory-mode parity and every collapse
  // operator either commutes or anticommutes with it.
  bool parity_compatible() const { return parity_ok_; }
  double norm() const { return norm_; }

  // Superoperator indices (i + j*n) whose memory occupations m_i + m_j have the sector's parity.
  std::vector<int> sector_indices(Sector s) const;
  SparseMat restricted(Sector s) const;

 private:
  Dims dims_;
  SparseMat L_;
  long n_;
  bool parity_ok_;
  double norm_;
};

Liouvillian build_liouvillian(const ModelSpec& spec);

DenseVec vectorize(const DenseMat& rho);
DenseMat unvectorize(const DenseVec& v, long n);

struct SteadyStateOptions {
  bool check_kernel = true;
  bool use_parity = true;
  double residual_tol = 1e-9;  // relative to ||L||_1
  double kernel_tol = 1e-12;  // |lambda| below kernel_tol*||L||_1 counts as zero
};

DensityMatrix steady_state(const Liouvillian& L, const SteadyStateOptions& opt = {});

// Numerical null-space dimension of L restricted to a sector.
int kernel_multiplicity(const Liouvillian& L, Sector s, double tol = 1e-12);

struct EvolveResult {
  std::vector<double> times;
  std::vector<std::vector<cplx>> values;  // values[observable][time]
  double max_trace_drift = 0.0;
  double max_hermiticity_error = 0.0;
  DensityMatrix final_state;
  OdeStats stats;
};

// rho0 is the state at t = 0; times are increasing output times >= 0.
EvolveResult evolve(const Liouvillian& L, const DensityMatrix& rho0, const std::vector<double>& times,
                    const std::vector<OperatorMatrix>& observables, const OdeOptions& opt = {});
EvolveResult evolve(const ModelSpec& spec, const DensityMatrix& rho0, const std::vector<double>& times,
                    const std::vector<OperatorMatrix>& observables, const OdeOptions& opt = {});

// Same contract as evolve, for uniformly spaced times t_k = t_0 + k dt: each parity
// sector is advanced with a dense propagator exp(L dt). Sectors larger than
// max_sector throw InvalidDimension.
EvolveResult evolve_propagator(const Liouvillian& L, const DensityMatrix& rho0, const std::vector<double>& times,
                               const std::vector<OperatorMatrix>& observables, long max_sector = 1600);

struct GapOptions {
  int n_eigs = 6;
  // Traceless eigenvectors are only treated as stationary below this floor
  // (relative to ||L||_1); eigenvectors carrying trace always are.
  double stationary_tol = 1e-14;
  double shift = 1e-12;  // relative to ||L||_1, positive real
};

struct GapResult {
  double rate = 0.0;
  cplx eigenvalue{0.0, 0.0};
  Sector sector_used = Sector::Full;
  std::string warning;
  std::vector<cplx> eigenvalues;  // all converged eigenvalues near zero
};

GapResult spectral_gap(const Liouvillian& L, Sector sector, const GapOptions& opt = {});

// Crude upper bound on the fastest rate in the generator: ||H||_inf + ||sum L^dag L||_inf.
double rate_scale(const ModelSpec& spec);

}  // namespace catsim
