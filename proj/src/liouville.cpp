#include "catsim/liouville.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <sstream>

#include <Eigen/SparseLU>
#include <unsupported/Eigen/KroneckerProduct>
#include <unsupported/Eigen/MatrixFunctions>

#include "catsim/arnoldi.hpp"
#include "catsim/error.hpp"

namespace catsim {

namespace {

using LU = Eigen::SparseLU<SparseMat, Eigen::COLAMDOrdering<int>>;

double max_row_sum(const SparseMat& A) {
  Eigen::VectorXd s = Eigen::VectorXd::Zero(A.rows());
  for (int k = 0; k < A.outerSize(); ++k)
    for (SparseMat::InnerIterator it(A, k); it; ++it) s[it.row()] += std::abs(it.value());
  return s.size() ? s.maxCoeff() : 0.0;
}

// +1 even, -1 odd, 0 mixed, for an operator's action on memory parity.
int parity_class(const SparseMat& op, long stride) {
  int cls = 2;
  for (int k = 0; k < op.outerSize(); ++k)
    for (SparseMat::InnerIterator it(op, k); it; ++it) {
      if (std::abs(it.value()) == 0.0) continue;
      int c = ((it.row() / stride + it.col() / stride) % 2) ? -1 : 1;
      if (cls == 2) cls = c;
      else if (cls != c) return 0;
    }
  return cls == 2 ? 1 : cls;
}

}  // namespace

void ModelSpec::validate() const {
  if (H.side() == 0) throw Error(ErrorKind::InvalidArgument, "model has no Hamiltonian");
  double herr = H.hermiticity_error();
  if (herr > 1e-10) {
    std::ostringstream os;
    os << "Hamiltonian not Hermitian (error " << herr << ")";
    throw Error(ErrorKind::InvalidArgument, os.str());
  }
  for (const auto& c : collapse_ops)
    if (c.dims() != H.dims()) throw Error(ErrorKind::DimensionMismatch, "collapse operator dims differ from H");
}

const char* to_string(Sector s) {
  switch (s) {
    case Sector::Full: return "full";
    case Sector::Even: return "even";
    case Sector::Odd: return "odd";
  }
  return "?";
}

Liouvillian::Liouvillian(Dims dims, SparseMat L, bool parity_ok)
    : dims_(std::move(dims)), L_(std::move(L)), n_(total_dim(dims_)), parity_ok_(parity_ok) {
  L_.makeCompressed();
  norm_ = norm1(L_);
}

std::vector<int> Liouvillian::sector_indices(Sector s) const {
  std::vector<int> idx;
  long N = n_ * n_;
  if (s == Sector::Full) {
    idx.resize(N);
    for (long k = 0; k < N; ++k) idx[k] = int(k);
    return idx;
  }
  long stride = n_ / dims_.at(0);
  int want = s == Sector::Even ? 0 : 1;
  for (long j = 0; j < n_; ++j)
    for (long i = 0; i < n_; ++i)
      if (((i / stride + j / stride) % 2) == want) idx.push_back(int(i + j * n_));
  return idx;
}

SparseMat Liouvillian::restricted(Sector s) const {
  if (s == Sector::Full) return L_;
  auto idx = sector_indices(s);
  std::vector<int> map(n_ * n_, -1);
  for (std::size_t k = 0; k < idx.size(); ++k) map[idx[k]] = int(k);
  std::vector<Eigen::Triplet<cplx>> t;
  t.reserve(L_.nonZeros() / 2 + 1);
  for (int c : idx)
    for (SparseMat::InnerIterator it(L_, c); it; ++it) {
      int r = map[it.row()];
      if (r >= 0) t.emplace_back(r, map[c], it.value());
    }
  SparseMat A(idx.size(), idx.size());
  A.setFromTriplets(t.begin(), t.end());
  A.makeCompressed();
  return A;
}

Liouvillian build_liouvillian(const ModelSpec& spec) {
  spec.validate();
  const long n = spec.H.side();
  SparseMat I(n, n);
  I.setIdentity();
  const cplx im(0.0, 1.0);
  const SparseMat& H = spec.H.data();
  SparseMat L = -im * (SparseMat(Eigen::kroneckerProduct(I, H)) - SparseMat(Eigen::kroneckerProduct(SparseMat(H.transpose()), I)));
  for (const auto& c : spec.collapse_ops) {
    const SparseMat& C = c.data();
    SparseMat CdC = C.adjoint() * C;
    L += SparseMat(Eigen::kroneckerProduct(SparseMat(C.conjugate()), C));
    L -= 0.5 * SparseMat(Eigen::kroneckerProduct(I, CdC));
    L -= 0.5 * SparseMat(Eigen::kroneckerProduct(SparseMat(CdC.transpose()), I));
  }
  L.prune(cplx(0.0, 0.0));

  long stride = n / spec.dims().at(0);
  bool ok = parity_class(H, stride) == 1;
  for (const auto& c : spec.collapse_ops) ok = ok && parity_class(c.data(), stride) != 0;
  return Liouvillian(spec.dims(), L, ok);
}

DenseVec vectorize(const DenseMat& rho) { return Eigen::Map<const DenseVec>(rho.data(), rho.size()); }

DenseMat unvectorize(const DenseVec& v, long n) { return Eigen::Map<const DenseMat>(v.data(), n, n); }

int kernel_multiplicity(const Liouvillian& L, Sector s, double tol) {
  SparseMat A = L.restricted(s);
  if (A.rows() == 0) return 0;
  double nrm = std::max(norm1(A), 1e-300);
  auto ritz = block_shift_invert_ritz(A, cplx(1e-10 * nrm, 0.0), 8, 4);
  int count = 0;
  for (cplx z : ritz)
    if (std::abs(z) < tol * nrm) ++count;
  return count;
}

DensityMatrix steady_state(const Liouvillian& L, const SteadyStateOptions& opt) {
  const long n = L.hilbert_side();
  Sector sec = (opt.use_parity && L.parity_compatible()) ? Sector::Even : Sector::Full;
  auto idx = L.sector_indices(sec);
  SparseMat A = L.restricted(sec);

  // Replace the first equation (the rho_00 row) by the trace constraint.
  std::vector<Eigen::Triplet<cplx>> t;
  t.reserve(A.nonZeros() + n);
  for (int k = 0; k < A.outerSize(); ++k)
    for (SparseMat::InnerIterator it(A, k); it; ++it)
      if (it.row() != 0) t.emplace_back(it.row(), it.col(), it.value());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    long i = idx[k] % n, j = idx[k] / n;
    if (i == j) t.emplace_back(0, int(k), 1.0);
  }
  SparseMat B(A.rows(), A.cols());
  B.setFromTriplets(t.begin(), t.end());
  B.makeCompressed();

  auto diagnose = [&](const std::string& why) {
    int mult = 0;
    if (L.parity_compatible())
      mult = kernel_multiplicity(L, Sector::Even, opt.kernel_tol) + kernel_multiplicity(L, Sector::Odd, opt.kernel_tol);
    else
      mult = kernel_multiplicity(L, Sector::Full, opt.kernel_tol);
    if (mult > 1) {
      std::ostringstream os;
      os << "steady state is not unique: null space multiplicity " << mult;
      throw DegenerateKernelError(mult, os.str());
    }
    throw Error(ErrorKind::NonConvergence, why);
  };

  LU lu;
  lu.analyzePattern(B);
  lu.factorize(B);
  if (lu.info() != Eigen::Success) diagnose("sparse LU failed: " + lu.lastErrorMessage());
  DenseVec rhs = DenseVec::Zero(B.rows());
  rhs[0] = 1.0;
  DenseVec x = lu.solve(rhs);
  if (lu.info() != Eigen::Success || !x.allFinite()) diagnose("sparse LU solve produced non-finite values");

  DenseVec full = DenseVec::Zero(n * n);
  for (std::size_t k = 0; k < idx.size(); ++k) full[idx[k]] = x[k];
  DenseMat rho = unvectorize(full, n);
  rho = 0.5 * (rho + rho.adjoint()).eval();
  rho /= rho.trace();

  double resid = (L.matrix() * vectorize(rho)).cwiseAbs().maxCoeff();
  if (resid > opt.residual_tol * L.norm()) {
    std::ostringstream os;
    os << "steady-state residual " << resid << " exceeds " << opt.residual_tol << "*||L||";
    diagnose(os.str());
  }
  if (opt.check_kernel) {
    int mult = L.parity_compatible()
                   ? kernel_multiplicity(L, Sector::Even, opt.kernel_tol) + kernel_multiplicity(L, Sector::Odd, opt.kernel_tol)
                   : kernel_multiplicity(L, Sector::Full, opt.kernel_tol);
    if (mult > 1) {
      std::ostringstream os;
      os << "steady state is not unique: null space multiplicity " << mult;
      throw DegenerateKernelError(mult, os.str());
    }
  }
  DensityMatrix out(L.dims(), rho);
  if (out.min_eigenvalue() < -1e-8)
    throw Error(ErrorKind::NonConvergence, "steady state is not positive semidefinite to 1e-8");
  return out;
}

EvolveResult evolve(const Liouvillian& L, const DensityMatrix& rho0, const std::vector<double>& times,
                    const std::vector<OperatorMatrix>& observables, const OdeOptions& opt) {
  if (rho0.dims() != L.dims()) throw Error(ErrorKind::DimensionMismatch, "initial state dims differ from model");
  const long n = L.hilbert_side();
  std::vector<DenseVec> w;
  for (const auto& o : observables) {
    if (o.dims() != L.dims()) throw Error(ErrorKind::DimensionMismatch, "observable dims differ from model");
    w.push_back(vectorize(DenseMat(o.data().transpose())));
  }
  if (times.empty()) throw Error(ErrorKind::InvalidArgument, "no output times");
  if (!(times.front() >= 0.0)) throw Error(ErrorKind::InvalidArgument, "output times must be >= 0");
  EvolveResult res;
  res.times = times;
  res.values.assign(observables.size(), std::vector<cplx>(times.size()));
  // rho0 is the state at t = 0
  std::vector<double> grid = times;
  const int skip = times.front() > 0.0 ? 1 : 0;
  if (skip) grid.insert(grid.begin(), 0.0);
  const cplx tr0 = rho0.trace();
  DenseVec last;
  auto f = [&](double, const DenseVec& y, DenseVec& dy) { dy.noalias() = L.matrix() * y; };
  auto observe = [&](int kg, const DenseVec& y) {
    int k = kg - skip;
    if (k < 0) return;
    for (std::size_t o = 0; o < w.size(); ++o) res.values[o][k] = (w[o].transpose() * y)(0);
    DenseMat r = unvectorize(y, n);
    res.max_trace_drift = std::max(res.max_trace_drift, std::abs(r.trace() - tr0));
    res.max_hermiticity_error = std::max(res.max_hermiticity_error, (r - r.adjoint()).cwiseAbs().maxCoeff());
    if (k + 1 == int(times.size())) last = y;
  };
  res.stats = integrate_dp45<DenseVec>(f, vectorize(rho0.data()), grid, observe, opt);
  res.final_state = DensityMatrix(L.dims(), unvectorize(last, n));
  return res;
}

EvolveResult evolve(const ModelSpec& spec, const DensityMatrix& rho0, const std::vector<double>& times,
                    const std::vector<OperatorMatrix>& observables, const OdeOptions& opt) {
  return evolve(build_liouvillian(spec), rho0, times, observables, opt);
}

EvolveResult evolve_propagator(const Liouvillian& L, const DensityMatrix& rho0, const std::vector<double>& times,
                               const std::vector<OperatorMatrix>& observables, long max_sector) {
  if (rho0.dims() != L.dims()) throw Error(ErrorKind::DimensionMismatch, "initial state dims differ from model");
  if (times.empty()) throw Error(ErrorKind::InvalidArgument, "no output times");
  if (!(times[0] >= 0.0)) throw Error(ErrorKind::InvalidArgument, "output times must be >= 0");
  const double dt = times.size() > 1 ? (times.back() - times.front()) / double(times.size() - 1) : 0.0;
  for (std::size_t k = 0; k < times.size(); ++k)
    if (std::abs(times[k] - times[0] - double(k) * dt) > 1e-9 * std::max(1.0, std::abs(times.back())))
      throw Error(ErrorKind::InvalidArgument, "propagator evolution needs uniformly spaced times");
  if (times.size() > 1 && !(dt > 0.0)) throw Error(ErrorKind::InvalidArgument, "times must increase");

  const long n = L.hilbert_side();
  std::vector<Sector> sectors = L.parity_compatible() ? std::vector<Sector>{Sector::Even, Sector::Odd}
                                                      : std::vector<Sector>{Sector::Full};
  DenseVec v0 = vectorize(rho0.data());
  std::vector<DenseVec> w;
  for (const auto& o : observables) {
    if (o.dims() != L.dims()) throw Error(ErrorKind::DimensionMismatch, "observable dims differ from model");
    w.push_back(vectorize(DenseMat(o.data().transpose())));
  }

  EvolveResult res;
  res.times = times;
  res.values.assign(observables.size(), std::vector<cplx>(times.size(), cplx(0.0, 0.0)));
  std::vector<DenseVec> full(times.size(), DenseVec::Zero(n * n));
  for (Sector s : sectors) {
    auto idx = L.sector_indices(s);
    const long m = long(idx.size());
    if (m > max_sector) throw Error(ErrorKind::InvalidDimension, "sector too large for a dense propagator");
    DenseVec v(m);
    for (long q = 0; q < m; ++q) v[q] = v0[idx[q]];
    if (v.norm() == 0.0) continue;
    DenseMat A = DenseMat(L.restricted(s));
    if (times[0] > 0.0) v = DenseMat((A * times[0]).exp()) * v;
    DenseMat P = times.size() > 1 ? DenseMat((A * dt).exp()) : DenseMat::Identity(m, m);
    for (std::size_t k = 0; k < times.size(); ++k) {
      if (k > 0) v = P * v;
      for (long q = 0; q < m; ++q) full[k][idx[q]] = v[q];
    }
  }
  const cplx tr0 = rho0.trace();
  for (std::size_t k = 0; k < times.size(); ++k) {
    for (std::size_t o = 0; o < w.size(); ++o) res.values[o][k] = (w[o].transpose() * full[k])(0);
    DenseMat r = unvectorize(full[k], n);
    res.max_trace_drift = std::max(res.max_trace_drift, std::abs(r.trace() - tr0));
    res.max_hermiticity_error = std::max(res.max_hermiticity_error, (r - r.adjoint()).cwiseAbs().maxCoeff());
    if (k + 1 == times.size()) res.final_state = DensityMatrix(L.dims(), r);
  }
  return res;
}

GapResult spectral_gap(const Liouvillian& L, Sector sector, const GapOptions& opt) {
  GapResult res;
  res.sector_used = sector;
  if (sector != Sector::Full && !L.parity_compatible()) {
    res.warning = "model does not respect memory parity; using the full space";
    std::clog << "warning: " << res.warning << "\n";
    res.sector_used = Sector::Full;
  }
  SparseMat A = L.restricted(res.sector_used);
  auto idx = L.sector_indices(res.sector_used);
  const long n = L.hilbert_side();
  double nrm = norm1(A);
  ArnoldiOptions ao;
  ao.nev = opt.n_eigs;
  ao.min_converged = 2;
  ao.want_vectors = true;
  // Nonzero eigenvalues have traceless eigenvectors; the traceless subspace is
  // invariant, so iterate inside it and the stationary state never enters.
  std::vector<int> diag_pos;
  for (std::size_t q = 0; q < idx.size(); ++q)
    if (idx[q] % n == idx[q] / n) diag_pos.push_back(int(q));
  if (!diag_pos.empty())
    ao.project = [&diag_pos](DenseVec& v) {
      cplx tr = 0.0;
      for (int q : diag_pos) tr += v[q];
      tr /= double(diag_pos.size());
      for (int q : diag_pos) v[q] -= tr;
    };
  auto ar = shift_invert_arnoldi(A, cplx(opt.shift * nrm, 0.0), ao);

  bool found = false;
  for (std::size_t k = 0; k < ar.eigenvalues.size(); ++k) {
    cplx lam = ar.eigenvalues[k];
    const DenseVec& v = ar.vectors[k];
    cplx tr = 0.0;
    for (int q : diag_pos) tr += v[q];
    if (ar.residuals[k] > 1e-6) continue;
    bool stationary = std::abs(lam) < opt.stationary_tol * nrm || std::abs(tr) > 1e-3;
    if (stationary) continue;
    res.eigenvalues.push_back(lam);
    if (!found || std::abs(lam.real()) < std::abs(res.eigenvalue.real())) {
      res.eigenvalue = lam;
      found = true;
    }
  }
  if (!found) throw Error(ErrorKind::NonConvergence, "no non-stationary eigenvalue found near zero");
  res.rate = -res.eigenvalue.real();
  return res;
}

double rate_scale(const ModelSpec& spec) {
  SparseMat G(spec.H.side(), spec.H.side());
  for (const auto& c : spec.collapse_ops) G += SparseMat(c.data().adjoint() * c.data());
  return max_row_sum(spec.H.data()) + max_row_sum(G);
}

}  // namespace catsim
