#include "catsim/qcore.hpp"

#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <boost/math/distributions/poisson.hpp>
#include <unsupported/Eigen/KroneckerProduct>

#include "catsim/error.hpp"

namespace catsim {

long total_dim(const Dims& dims) {
  long n = 1;
  for (int d : dims) {
    if (d < 1) throw Error(ErrorKind::InvalidDimension, "mode dimension must be positive");
    n *= d;
  }
  return n;
}

OperatorMatrix::OperatorMatrix(Dims dims, SparseMat data) : dims_(std::move(dims)), data_(std::move(data)) {
  long n = total_dim(dims_);
  if (data_.rows() != n || data_.cols() != n) {
    std::ostringstream os;
    os << "operator is " << data_.rows() << "x" << data_.cols() << " but dims imply side " << n;
    throw Error(ErrorKind::DimensionMismatch, os.str());
  }
  data_.makeCompressed();
}

double OperatorMatrix::hermiticity_error() const {
  SparseMat d = data_ - SparseMat(data_.adjoint());
  double e = 0.0;
  for (int k = 0; k < d.outerSize(); ++k)
    for (SparseMat::InnerIterator it(d, k); it; ++it) e = std::max(e, std::abs(it.value()));
  return e;
}

OperatorMatrix& OperatorMatrix::mark_hermitian(double tol) {
  double e = hermiticity_error();
  if (e >= tol) {
    std::ostringstream os;
    os << "operator is not Hermitian: max |M - M^dag| = " << e;
    throw Error(ErrorKind::InvalidArgument, os.str());
  }
  hermitian_ = true;
  return *this;
}

OperatorMatrix OperatorMatrix::adjoint() const {
  OperatorMatrix r(dims_, SparseMat(data_.adjoint()));
  r.hermitian_ = hermitian_;
  return r;
}

void OperatorMatrix::check_same(const OperatorMatrix& o) const {
  if (dims_ != o.dims_) throw Error(ErrorKind::DimensionMismatch, "operator dims differ");
}

OperatorMatrix OperatorMatrix::operator*(const OperatorMatrix& o) const {
  check_same(o);
  return OperatorMatrix(dims_, SparseMat(data_ * o.data_));
}
OperatorMatrix OperatorMatrix::operator+(const OperatorMatrix& o) const {
  check_same(o);
  return OperatorMatrix(dims_, SparseMat(data_ + o.data_));
}
OperatorMatrix OperatorMatrix::operator-(const OperatorMatrix& o) const {
  check_same(o);
  return OperatorMatrix(dims_, SparseMat(data_ - o.data_));
}
OperatorMatrix OperatorMatrix::operator*(cplx s) const {
  return OperatorMatrix(dims_, SparseMat(data_ * s));
}

StateVector::StateVector(Dims dims, DenseVec v) : dims_(std::move(dims)), v_(std::move(v)) {
  if (v_.size() != total_dim(dims_)) throw Error(ErrorKind::DimensionMismatch, "state length does not match dims");
}

StateVector StateVector::normalized() const {
  double n = v_.norm();
  if (n == 0.0) throw Error(ErrorKind::InvalidArgument, "cannot normalize the zero vector");
  return StateVector(dims_, v_ / n);
}

DensityMatrix::DensityMatrix(Dims dims, DenseMat m) : dims_(std::move(dims)), m_(std::move(m)) {
  long n = total_dim(dims_);
  if (m_.rows() != n || m_.cols() != n) throw Error(ErrorKind::DimensionMismatch, "density matrix side does not match dims");
  trace_ = m_.trace();
  herm_err_ = (m_ - m_.adjoint()).cwiseAbs().maxCoeff();
}

DensityMatrix DensityMatrix::pure(const StateVector& psi) {
  return DensityMatrix(psi.dims(), psi.data() * psi.data().adjoint());
}

double DensityMatrix::min_eigenvalue() const {
  DenseMat h = 0.5 * (m_ + m_.adjoint());
  Eigen::SelfAdjointEigenSolver<DenseMat> es(h, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

bool DensityMatrix::is_valid_state() const {
  return std::abs(trace_ - 1.0) <= 1e-9 && herm_err_ <= 1e-10 && min_eigenvalue() >= -1e-8;
}

OperatorMatrix annihilation(int dim) {
  if (dim < 2) throw Error(ErrorKind::InvalidDimension, "annihilation operator needs dim >= 2");
  std::vector<Eigen::Triplet<cplx>> t;
  for (int n = 1; n < dim; ++n) t.emplace_back(n - 1, n, std::sqrt(double(n)));
  SparseMat a(dim, dim);
  a.setFromTriplets(t.begin(), t.end());
  return OperatorMatrix({dim}, a);
}

OperatorMatrix creation(int dim) { return annihilation(dim).adjoint(); }

OperatorMatrix number(int dim) {
  if (dim < 1) throw Error(ErrorKind::InvalidDimension, "dim must be positive");
  std::vector<Eigen::Triplet<cplx>> t;
  for (int n = 1; n < dim; ++n) t.emplace_back(n, n, double(n));
  SparseMat m(dim, dim);
  m.setFromTriplets(t.begin(), t.end());
  OperatorMatrix r({dim}, m);
  r.mark_hermitian();
  return r;
}

OperatorMatrix identity(int dim) { return identity(Dims{dim}); }

OperatorMatrix identity(const Dims& dims) {
  long n = total_dim(dims);
  SparseMat m(n, n);
  m.setIdentity();
  OperatorMatrix r(dims, m);
  r.mark_hermitian();
  return r;
}

OperatorMatrix tensor(const std::vector<OperatorMatrix>& ops) {
  if (ops.empty()) throw Error(ErrorKind::InvalidArgument, "tensor of an empty list");
  SparseMat acc = ops.front().data();
  Dims dims = ops.front().dims();
  for (std::size_t k = 1; k < ops.size(); ++k) {
    acc = Eigen::kroneckerProduct(acc, ops[k].data()).eval();
    dims.insert(dims.end(), ops[k].dims().begin(), ops[k].dims().end());
  }
  return OperatorMatrix(dims, acc);
}

OperatorMatrix embed(const OperatorMatrix& op, const Dims& dims, int mode) {
  if (mode < 0 || mode >= int(dims.size())) throw Error(ErrorKind::InvalidArgument, "mode index out of range");
  if (op.dims().size() != 1 || op.dims()[0] != dims[mode])
    throw Error(ErrorKind::DimensionMismatch, "single-mode operator does not fit the target mode");
  std::vector<OperatorMatrix> parts;
  for (int k = 0; k < int(dims.size()); ++k) parts.push_back(k == mode ? op : identity(dims[k]));
  return tensor(parts);
}

OperatorMatrix mode_parity(const Dims& dims, int mode) {
  int d = dims.at(mode);
  std::vector<Eigen::Triplet<cplx>> t;
  for (int n = 0; n < d; ++n) t.emplace_back(n, n, n % 2 ? -1.0 : 1.0);
  SparseMat p(d, d);
  p.setFromTriplets(t.begin(), t.end());
  return embed(OperatorMatrix({d}, p), dims, mode);
}

StateVector fock(int dim, int n) {
  if (dim < 1 || n < 0 || n >= dim) throw Error(ErrorKind::InvalidDimension, "Fock index outside truncation");
  DenseVec v = DenseVec::Zero(dim);
  v[n] = 1.0;
  return StateVector({dim}, v);
}

StateVector coherent(int dim, cplx alpha) {
  if (dim < 1) throw Error(ErrorKind::InvalidDimension, "dim must be positive");
  double n2 = std::norm(alpha);
  double tail = 0.0;
  if (n2 > 0.0)
    tail = boost::math::cdf(boost::math::complement(boost::math::poisson_distribution<double>(n2), double(dim - 1)));
  if (n2 > dim / 4.0 || tail >= 1e-8) {
    std::ostringstream os;
    os << "|alpha|^2 = " << n2 << " needs |alpha|^2 <= dim/4 = " << dim / 4.0
       << " and Poisson tail mass beyond dim < 1e-8 (got " << tail << ")";
    throw Error(ErrorKind::TruncationTooSmall, os.str());
  }
  DenseVec v(dim);
  v[0] = std::exp(-0.5 * std::norm(alpha));
  for (int n = 1; n < dim; ++n) v[n] = v[n - 1] * alpha / std::sqrt(double(n));
  return StateVector({dim}, v).normalized();
}

StateVector tensor(const std::vector<StateVector>& states) {
  if (states.empty()) throw Error(ErrorKind::InvalidArgument, "tensor of an empty list");
  DenseVec acc = states.front().data();
  Dims dims = states.front().dims();
  for (std::size_t k = 1; k < states.size(); ++k) {
    acc = Eigen::kroneckerProduct(acc, states[k].data()).eval();
    dims.insert(dims.end(), states[k].dims().begin(), states[k].dims().end());
  }
  return StateVector(dims, acc);
}

cplx expect(const OperatorMatrix& op, const DensityMatrix& rho) {
  if (op.dims() != rho.dims()) throw Error(ErrorKind::DimensionMismatch, "operator and state dims differ");
  // Tr(O rho) = sum_ij O_ij rho_ji
  cplx s = 0.0;
  const SparseMat& o = op.data();
  for (int j = 0; j < o.outerSize(); ++j)
    for (SparseMat::InnerIterator it(o, j); it; ++it) s += it.value() * rho.data()(it.col(), it.row());
  return s;
}

cplx expect(const OperatorMatrix& op, const StateVector& psi) {
  if (op.dims() != psi.dims()) throw Error(ErrorKind::DimensionMismatch, "operator and state dims differ");
  return psi.data().dot(op.data() * psi.data());
}

}  // namespace catsim
