#pragma once

#include <complex>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace catsim {

using cplx = std::complex<double>;
using SparseMat = Eigen::SparseMatrix<cplx>;
using DenseMat = Eigen::MatrixXcd;
using DenseVec = Eigen::VectorXcd;
using Dims = std::vector<int>;

// Mode order: memory first, buffer second, qubit last.
long total_dim(const Dims& dims);

class OperatorMatrix {
 public:
  OperatorMatrix() = default;
  OperatorMatrix(Dims dims, SparseMat data);

  const Dims& dims() const { return dims_; }
  const SparseMat& data() const { return data_; }
  long side() const { return data_.rows(); }
  bool hermitian_flag() const { return hermitian_; }

  // Sets the flag after checking ||M - M^dag||_max < tol; throws otherwise.
  OperatorMatrix& mark_hermitian(double tol = 1e-12);
  double hermiticity_error() const;

  OperatorMatrix adjoint() const;
  DenseMat dense() const { return DenseMat(data_); }

  OperatorMatrix operator*(const OperatorMatrix& o) const;
  OperatorMatrix operator+(const OperatorMatrix& o) const;
  OperatorMatrix operator-(const OperatorMatrix& o) const;
  OperatorMatrix operator*(cplx s) const;
  friend OperatorMatrix operator*(cplx s, const OperatorMatrix& m) { return m * s; }

 private:
  void check_same(const OperatorMatrix& o) const;
  Dims dims_;
  SparseMat data_;
  bool hermitian_ = false;
};

class StateVector {
 public:
  StateVector() = default;
  StateVector(Dims dims, DenseVec v);
  const Dims& dims() const { return dims_; }
  const DenseVec& data() const { return v_; }
  double norm() const { return v_.norm(); }
  StateVector normalized() const;

 private:
  Dims dims_;
  DenseVec v_;
};

class DensityMatrix {
 public:
  DensityMatrix() = default;
  DensityMatrix(Dims dims, DenseMat m);
  static DensityMatrix pure(const StateVector& psi);

  const Dims& dims() const { return dims_; }
  const DenseMat& data() const { return m_; }
  cplx trace() const { return trace_; }
  double hermiticity_error() const { return herm_err_; }
  double min_eigenvalue() const;
  // trace 1 +- 1e-9, Hermitian to 1e-10, min eigenvalue >= -1e-8
  bool is_valid_state() const;

 private:
  Dims dims_;
  DenseMat m_;
  cplx trace_{0.0, 0.0};
  double herm_err_ = 0.0;
};

OperatorMatrix annihilation(int dim);
OperatorMatrix creation(int dim);
OperatorMatrix number(int dim);
OperatorMatrix identity(int dim);
OperatorMatrix identity(const Dims& dims);
OperatorMatrix tensor(const std::vector<OperatorMatrix>& ops);
// Places a single-mode operator on `mode` of a multi-mode space.
OperatorMatrix embed(const OperatorMatrix& op, const Dims& dims, int mode);
// Parity (-1)^n of one mode, as a diagonal operator on the full space.
OperatorMatrix mode_parity(const Dims& dims, int mode);

StateVector fock(int dim, int n);
StateVector coherent(int dim, cplx alpha);
StateVector tensor(const std::vector<StateVector>& states);

cplx expect(const OperatorMatrix& op, const DensityMatrix& rho);
cplx expect(const OperatorMatrix& op, const StateVector& psi);

}  // namespace catsim
