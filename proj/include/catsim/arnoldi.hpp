#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "catsim/qcore.hpp"

namespace catsim {

struct ArnoldiOptions {
  int nev = 6;
  int min_converged = 0;  // leading Ritz pairs that must converge; 0 means all nev
  int ncv = 0;  // Krylov basis size; 0 means max(2*nev+1, 30)
  double tol = 1e-10;
  int max_restarts = 60;
  std::uint64_t seed = 12345;
  bool want_vectors = false;
  // Applied to every new Krylov vector; used to keep iterates inside an
  // invariant subspace (e.g. traceless operators) against roundoff.
  std::function<void(DenseVec&)> project;
};

struct ArnoldiResult {
  std::vector<cplx> eigenvalues;  // ordered by distance to the shift
  std::vector<double> residuals;  // relative residuals in the shift-inverted problem
  std::vector<DenseVec> vectors;
  int restarts = 0;
  bool converged = false;
};

// Eigenvalues of A nearest to sigma via Arnoldi on (A - sigma I)^{-1} with
// explicit restarts. A must be square; sigma must not be an eigenvalue.
ArnoldiResult shift_invert_arnoldi(const SparseMat& A, cplx sigma, const ArnoldiOptions& opt = {});

// Block inverse subspace iteration followed by Rayleigh-Ritz on A. Returns k
// Ritz values approximating the eigenvalues of A closest to sigma.
std::vector<cplx> block_shift_invert_ritz(const SparseMat& A, cplx sigma, int k, int iterations,
                                          std::uint64_t seed = 777);

double norm1(const SparseMat& A);

}  // namespace catsim
