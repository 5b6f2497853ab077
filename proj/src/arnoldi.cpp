#include "catsim/arnoldi.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Eigenvalues>
#include <Eigen/SparseLU>

#include "catsim/error.hpp"
#include "catsim/rng.hpp"

namespace catsim {

namespace {

using LU = Eigen::SparseLU<SparseMat, Eigen::COLAMDOrdering<int>>;

void factor_shifted(LU& lu, const SparseMat& A, cplx sigma) {
  SparseMat I(A.rows(), A.cols());
  I.setIdentity();
  SparseMat S = A - sigma * I;
  S.makeCompressed();
  lu.analyzePattern(S);
  lu.factorize(S);
  if (lu.info() != Eigen::Success)
    throw Error(ErrorKind::NonConvergence, "LU factorization of shifted operator failed: " + lu.lastErrorMessage());
}

DenseVec random_vector(long n, CounterRng& rng) {
  DenseVec v(n);
  for (long i = 0; i < n; ++i) v[i] = cplx(rng.normal(), rng.normal());
  return v.normalized();
}

}  // namespace

double norm1(const SparseMat& A) {
  double m = 0.0;
  for (int k = 0; k < A.outerSize(); ++k) {
    double s = 0.0;
    for (SparseMat::InnerIterator it(A, k); it; ++it) s += std::abs(it.value());
    m = std::max(m, s);
  }
  return m;
}

ArnoldiResult shift_invert_arnoldi(const SparseMat& A, cplx sigma, const ArnoldiOptions& opt) {
  const long n = A.rows();
  if (A.cols() != n) throw Error(ErrorKind::DimensionMismatch, "Arnoldi needs a square matrix");
  int nev = std::min<long>(opt.nev, n);
  int m = opt.ncv > 0 ? opt.ncv : std::max(2 * nev + 1, 30);
  m = int(std::min<long>(m, n));
  if (nev < 1) throw Error(ErrorKind::InvalidArgument, "nev must be positive");

  LU lu;
  factor_shifted(lu, A, sigma);
  CounterRng rng(opt.seed);
  DenseVec v0 = random_vector(n, rng);
  if (opt.project) {
    opt.project(v0);
    v0.normalize();
  }

  ArnoldiResult res;
  for (int restart = 0; restart <= opt.max_restarts; ++restart) {
    DenseMat V = DenseMat::Zero(n, m + 1);
    DenseMat H = DenseMat::Zero(m + 1, m);
    V.col(0) = v0;
    int built = m;
    for (int j = 0; j < m; ++j) {
      DenseVec w = lu.solve(V.col(j));
      if (opt.project) opt.project(w);
      double wnorm0 = w.norm();
      // classical Gram-Schmidt with one round of reorthogonalization
      for (int pass = 0; pass < 2; ++pass) {
        DenseVec h = V.leftCols(j + 1).adjoint() * w;
        w -= V.leftCols(j + 1) * h;
        H.col(j).head(j + 1) += h;
      }
      double beta = w.norm();
      H(j + 1, j) = beta;
      if (beta <= 1e-14 * wnorm0) {
        built = j + 1;  // invariant subspace found
        break;
      }
      V.col(j + 1) = w / beta;
    }

    DenseMat Hm = H.topLeftCorner(built, built);
    Eigen::ComplexEigenSolver<DenseMat> es(Hm);
    DenseVec theta = es.eigenvalues();
    DenseMat Y = es.eigenvectors();
    std::vector<int> order(built);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return std::abs(theta[a]) > std::abs(theta[b]); });

    double hnext = built < m || built == n ? 0.0 : std::abs(H(built, built - 1));
    int want = std::min(nev, built);
    bool ok = true;
    res.eigenvalues.clear();
    res.residuals.clear();
    res.vectors.clear();
    for (int i = 0; i < want; ++i) {
      int k = order[i];
      DenseVec y = Y.col(k).normalized();
      double r = hnext * std::abs(y[built - 1]) / std::max(std::abs(theta[k]), 1e-300);
      res.residuals.push_back(r);
      res.eigenvalues.push_back(sigma + 1.0 / theta[k]);
      if (opt.want_vectors) res.vectors.push_back((V.leftCols(built) * y).normalized());
      int need = opt.min_converged > 0 ? std::min(opt.min_converged, want) : want;
      if (i < need && r > opt.tol) ok = false;
    }
    res.restarts = restart;
    if (ok) {
      res.converged = true;
      return res;
    }
    DenseVec next = DenseVec::Zero(n);
    for (int i = 0; i < want; ++i) next += V.leftCols(built) * Y.col(order[i]).normalized();
    if (opt.project) opt.project(next);
    if (next.norm() == 0.0) next = random_vector(n, rng);
    v0 = next.normalized();
  }
  throw Error(ErrorKind::NonConvergence, "shift-invert Arnoldi did not converge within the restart budget");
}

std::vector<cplx> block_shift_invert_ritz(const SparseMat& A, cplx sigma, int k, int iterations,
                                          std::uint64_t seed) {
  const long n = A.rows();
  k = int(std::min<long>(k, n));
  LU lu;
  factor_shifted(lu, A, sigma);
  CounterRng rng(seed);
  DenseMat V(n, k);
  for (int j = 0; j < k; ++j) V.col(j) = random_vector(n, rng);
  auto orth = [&](DenseMat& X) {
    Eigen::HouseholderQR<DenseMat> qr(X);
    X = qr.householderQ() * DenseMat::Identity(n, k);
  };
  orth(V);
  for (int it = 0; it < iterations; ++it) {
    DenseMat W = lu.solve(V);
    V = W;
    orth(V);
  }
  DenseMat B = V.adjoint() * (A * V);
  Eigen::ComplexEigenSolver<DenseMat> es(B, false);
  std::vector<cplx> out(es.eigenvalues().data(), es.eigenvalues().data() + k);
  std::sort(out.begin(), out.end(), [](cplx a, cplx b) { return std::abs(a) < std::abs(b); });
  return out;
}

}  // namespace catsim
