#include "catsim/ats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/KroneckerProduct>

#include "catsim/error.hpp"
#include "catsim/parallel.hpp"

namespace catsim {

namespace {

constexpr double kPi = 3.14159265358979323846;

void check_params(const AtsParams& p) {
  if (!(p.E_C > 0.0) || !(p.E_L > 0.0) || !(p.E_J > 0.0)) throw Error(ErrorKind::InvalidArgument, "energies must be positive");
  if (p.dE_J < 0.0 || p.E_L <= 2.0 * p.dE_J) throw Error(ErrorKind::InvalidArgument, "need E_L > 2 dE_J >= 0");
}

}  // namespace

AtsParams table_ats_params() {
  AtsParams p;
  p.E_C = 72.6e6;
  p.E_L = 62.40e9;
  p.E_J = 37.00e9;
  p.dE_J = 0.207e9;
  p.upsilon = 0.036;
  p.omega_a0 = kTwoPi * 4.0457e9;
  return p;
}

ReducedFlux reduce_flux(const FluxPoint& fp) {
  ReducedFlux r;
  double s = fp.sigma, d = fp.delta;
  r.n_pi = int(std::floor(s / kPi));
  s -= r.n_pi * kPi;
  d -= r.n_pi * kPi;
  r.n_2pi = int(std::floor((d + kPi) / (2.0 * kPi)));
  d -= r.n_2pi * 2.0 * kPi;
  if (d > kPi / 2.0) {
    s = kPi - s;
    d = kPi - d;
    r.inverted = true;
  } else if (d < -kPi / 2.0) {
    s = kPi - s;
    d = -kPi - d;
    r.inverted = true;
  }
  r.cell = {s, d};
  return r;
}

double josephson(const AtsParams& p, const FluxPoint& fp, double phi, int order) {
  // -2 E_J cS cos(x) + 2 dE_J sS sin(x), x = phi + phi_D; derivatives cycle.
  double x = phi + fp.delta, cS = std::cos(fp.sigma), sS = std::sin(fp.sigma);
  double c = std::cos(x), s = std::sin(x);
  double dc[4] = {c, -s, -c, s};  // d^k cos
  double ds[4] = {s, c, -s, -c};  // d^k sin
  int k = order % 4;
  return -2.0 * p.E_J * cS * dc[k] + 2.0 * p.dE_J * sS * ds[k];
}

double potential(const AtsParams& p, const FluxPoint& fp, double phi) {
  return 0.5 * p.E_L * phi * phi + josephson(p, fp, phi, 0);
}

double potential_minimum(const AtsParams& p, const FluxPoint& fp) {
  check_params(p);
  double A = 2.0 * std::hypot(p.E_J, p.dE_J);
  double span = 2.0 * std::sqrt(A / p.E_L) + 0.1;
  const int n = 4000;
  double best = 0.0, best_u = std::numeric_limits<double>::infinity();
  for (int k = 0; k <= n; ++k) {
    double phi = -span + 2.0 * span * k / n;
    double u = potential(p, fp, phi);
    if (u < best_u - 1e-12 * A || (std::abs(u - best_u) <= 1e-12 * A && phi >= 0.0 && best < 0.0)) {
      best_u = u;
      best = phi;
    }
  }
  for (int it = 0; it < 50; ++it) {
    double g = p.E_L * best + josephson(p, fp, best, 1);
    double h = p.E_L + josephson(p, fp, best, 2);
    if (h <= 0.0) break;
    double step = g / h;
    best -= step;
    if (std::abs(step) < 1e-15) break;
  }
  return best;
}

double inductive_energy(const AtsParams& p, const FluxPoint& fp) {
  return p.E_L + josephson(p, fp, potential_minimum(p, fp), 2);
}

double symmetry_residual(const AtsParams& p, const FluxPoint& fp, double phi) {
  double scale = p.E_L * phi * phi + 2.0 * (p.E_J + p.dE_J);
  double u = potential(p, fp, phi);
  double worst = 0.0;
  auto cmp = [&](double v) { worst = std::max(worst, std::abs(v - u) / scale); };
  cmp(potential(p, {fp.sigma + kPi, fp.delta + kPi}, phi));
  cmp(potential(p, {fp.sigma + kPi, fp.delta - kPi}, phi));
  // inversion about (pi/2, pi/2) and the derived centre (pi/2, -pi/2)
  double es = fp.sigma - kPi / 2.0, ed = fp.delta - kPi / 2.0;
  cmp(potential(p, {kPi / 2.0 - es, kPi / 2.0 - ed}, -phi));
  double ed2 = fp.delta + kPi / 2.0;
  cmp(potential(p, {kPi / 2.0 - es, -kPi / 2.0 - ed2}, -phi));
  if (p.dE_J == 0.0) {
    cmp(potential(p, {-fp.sigma, fp.delta}, phi));
    cmp(potential(p, {fp.sigma, -fp.delta}, -phi));
  }
  return worst;
}

double saddle_phi_min(const AtsParams& p, int which, double eps, double delta) {
  double s = which > 0 ? 1.0 : -1.0;
  return s * (2.0 * p.E_J * eps + 2.0 * p.dE_J * delta) / (p.E_L - s * 2.0 * p.dE_J);
}

SaddleAnalysis saddle_analysis(const AtsParams& p, int which, double h) {
  check_params(p);
  if (which != 1 && which != -1) throw Error(ErrorKind::InvalidArgument, "which must be +1 or -1");
  if (p.dE_J >= p.E_J) throw Error(ErrorKind::NotASaddle, "dE_J >= E_J: the critical point is not a saddle");
  SaddleAnalysis a;
  a.which = which;
  const double s = which, EL = p.E_L, EJ = p.E_J, dE = p.dE_J, D = EL - s * 2.0 * dE;
  a.inductive = D;
  Eigen::Matrix2d outer;
  outer << EJ * EJ, EJ * dE, EJ * dE, dE * dE;
  Eigen::Matrix2d anti;
  anti << dE, EJ, EJ, dE;
  a.M = 4.0 * (EL - s * dE) / (D * D) * outer + s * anti;
  a.det_M = EL * EL * (dE * dE - EJ * EJ) / (D * D);
  a.saddle = a.det_M < 0.0;

  auto E = [&](double e, double d) { return inductive_energy(p, {kPi / 2.0 + e, s * kPi / 2.0 + d}); };
  double e0 = E(0.0, 0.0);
  Eigen::Matrix2d H;
  H(0, 0) = (E(h, 0) - 2.0 * e0 + E(-h, 0)) / (h * h);
  H(1, 1) = (E(0, h) - 2.0 * e0 + E(0, -h)) / (h * h);
  H(0, 1) = H(1, 0) = (E(h, h) - E(h, -h) - E(-h, h) + E(-h, -h)) / (4.0 * h * h);
  a.hessian_numeric = 0.5 * H;
  a.hessian_rel_diff = (a.hessian_numeric - a.M).norm() / a.M.norm();

  double worst = 0.0;
  for (auto [e, d] : {std::pair{h, 0.0}, {0.0, h}, {h, -h}}) {
    double num = potential_minimum(p, {kPi / 2.0 + e, s * kPi / 2.0 + d});
    double ana = saddle_phi_min(p, which, e, d);
    if (ana != 0.0) worst = std::max(worst, std::abs(num / ana - 1.0));
  }
  a.phi_min_rel_diff = worst;
  return a;
}

namespace {

struct Basis {
  int da, db;
  Eigen::MatrixXd n_a, n_b, x_a, x_b;  // on the product space, memory index major
};

Basis make_basis(int da, int db) {
  auto ladder = [](int d) {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(d, d);
    for (int n = 1; n < d; ++n) a(n - 1, n) = std::sqrt(double(n));
    return a;
  };
  Eigen::MatrixXd a = ladder(da), b = ladder(db);
  Eigen::MatrixXd Ia = Eigen::MatrixXd::Identity(da, da), Ib = Eigen::MatrixXd::Identity(db, db);
  Basis B{da, db, {}, {}, {}, {}};
  B.n_a = Eigen::kroneckerProduct(Eigen::MatrixXd(a.transpose() * a), Ib);
  B.n_b = Eigen::kroneckerProduct(Ia, Eigen::MatrixXd(b.transpose() * b));
  B.x_a = Eigen::kroneckerProduct(Eigen::MatrixXd(a + a.transpose()), Ib);
  B.x_b = Eigen::kroneckerProduct(Ia, Eigen::MatrixXd(b + b.transpose()));
  return B;
}

struct Workspace {
  Basis basis;
  Eigen::VectorXd lambda;  // spectrum of the fluctuation phase operator
  Eigen::MatrixXd V;
  Eigen::MatrixXd H0;  // f_a0 n_a + f_b0 n_b
  double phi_b;
  double f_b0;
};

Workspace make_workspace(const AtsParams& p, const FluxMapOptions& opt) {
  if (opt.mem_dim < 2 || opt.buf_dim < 2) throw Error(ErrorKind::InvalidDimension, "flux map dims must be >= 2");
  Workspace w{make_basis(opt.mem_dim, opt.buf_dim), {}, {}, {}, 0.0, 0.0};
  w.phi_b = std::pow(2.0 * p.E_C / p.E_L, 0.25);
  w.f_b0 = std::sqrt(8.0 * p.E_L * p.E_C);
  Eigen::MatrixXd X = w.phi_b * (w.basis.x_b + p.upsilon * w.basis.x_a);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(X);
  w.lambda = es.eigenvalues();
  w.V = es.eigenvectors();
  w.H0 = (p.omega_a0 / kTwoPi) * w.basis.n_a + w.f_b0 * w.basis.n_b;
  return w;
}

FluxModes modes_with(const AtsParams& p, const FluxPoint& fp, const FluxMapOptions& opt, const Workspace& w) {
  FluxModes m;
  m.phi_min = potential_minimum(p, fp);
  // The buffer is displaced by phi_min / (2 phi_b); f_b0 b^dag b then supplies
  // the linear restoring term E_L phi_min phi_b (b + b^dag).
  Eigen::VectorXd f(w.lambda.size());
  for (int k = 0; k < f.size(); ++k) f(k) = josephson(p, fp, m.phi_min + w.lambda(k), 0);
  Eigen::MatrixXd H = w.H0 + w.V * f.asDiagonal() * w.V.transpose() +
                      (p.E_L * m.phi_min * w.phi_b) * w.basis.x_b;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
  const auto& E = es.eigenvalues();
  const auto& U = es.eigenvectors();
  const int db = w.basis.db;
  const int idx_a = 1 * db + 0, idx_b = 0 * db + 1;
  // Ground state: largest weight on |0,0>.
  int g = 0, ka = 0, kb = 0;
  double best_g = -1.0;
  const int nscan = std::min<int>(int(E.size()), 12);
  for (int k = 0; k < nscan; ++k)
    if (U(0, k) * U(0, k) > best_g) {
      best_g = U(0, k) * U(0, k);
      g = k;
    }
  double best_a = -1.0, best_b = -1.0;
  for (int k = 0; k < nscan; ++k) {
    if (k == g) continue;
    double oa = U(idx_a, k) * U(idx_a, k), ob = U(idx_b, k) * U(idx_b, k);
    if (oa > best_a) {
      best_a = oa;
      ka = k;
    }
    if (ob > best_b) {
      best_b = ob;
      kb = k;
    }
  }
  m.f_a = E(ka) - E(g);
  m.f_b = E(kb) - E(g);
  m.overlap_a = best_a;
  m.overlap_b = best_b;
  m.ambiguous = ka == kb || best_a < opt.overlap_min || best_b < opt.overlap_min || best_g < opt.overlap_min;
  return m;
}

}  // namespace

FluxModes flux_point_modes(const AtsParams& p, const FluxPoint& fp, const FluxMapOptions& opt) {
  check_params(p);
  return modes_with(p, fp, opt, make_workspace(p, opt));
}

std::vector<double> linear_grid(double lo, double hi, int n) {
  if (n < 2) throw Error(ErrorKind::InvalidArgument, "grid needs at least 2 points");
  std::vector<double> g(n);
  for (int k = 0; k < n; ++k) g[k] = lo + (hi - lo) * k / (n - 1);
  return g;
}

FluxMap flux_map(const AtsParams& p, const std::vector<double>& sigma, const std::vector<double>& delta,
                 const FluxMapOptions& opt) {
  check_params(p);
  if (sigma.empty() || delta.empty()) throw Error(ErrorKind::InvalidArgument, "empty flux grid");
  Workspace w = make_workspace(p, opt);
  FluxMap m;
  m.sigma = sigma;
  m.delta = delta;
  const int nr = int(sigma.size()), nc = int(delta.size());
  m.f_a.resize(nr, nc);
  m.f_b.resize(nr, nc);
  m.ambiguous.resize(nr, nc);
  parallel_for(nr * nc, [&](int k) {
    int i = k / nc, j = k % nc;
    auto md = modes_with(p, {sigma[i], delta[j]}, opt, w);
    m.f_a(i, j) = md.f_a;
    m.f_b(i, j) = md.f_b;
    m.ambiguous(i, j) = md.ambiguous ? 1 : 0;
  });
  return m;
}

void write_flux_csv(std::ostream& os, const FluxMap& m, bool buffer) {
  os.precision(17);
  os << "phi_sigma\\phi_delta";
  for (double d : m.delta) os << "," << d;
  os << "\n";
  const Eigen::MatrixXd& f = buffer ? m.f_b : m.f_a;
  for (std::size_t r = 0; r < m.sigma.size(); ++r) {
    os << m.sigma[r];
    for (std::size_t c = 0; c < m.delta.size(); ++c) os << "," << f(r, c);
    os << "\n";
  }
}

AtsEnergies extract_params(double f_b1, double f_b2, double f_bmax, double E_C) {
  if (!(E_C > 0.0)) throw Error(ErrorKind::InvalidArgument, "E_C must be positive");
  if (!(f_b1 > 0.0) || f_b2 < f_b1) throw Error(ErrorKind::InvalidArgument, "need f_b2 >= f_b1 > 0");
  AtsEnergies e;
  double lo = f_b1 * f_b1 / (8.0 * E_C), hi = f_b2 * f_b2 / (8.0 * E_C);
  e.E_L = 0.5 * (lo + hi);
  e.dE_J = 0.25 * (hi - lo);
  e.E_J = 0.5 * (f_bmax * f_bmax / (8.0 * E_C) - e.E_L);
  if (!(e.E_J > 0.0)) throw Error(ErrorKind::InvalidArgument, "inconsistent frequencies: E_J would be nonpositive");
  return e;
}

namespace {
// first-order shift of the 0-1 transition from a quartic term u4 phi^4/24, phi_b^4 = 2 E_C/u2
double quartic_shift(double E_C, double u2, double u4) { return u4 * E_C / u2; }
}  // namespace

SaddleFrequencies forward_frequencies(double E_C, const AtsEnergies& e, bool quartic) {
  double u1 = e.E_L - 2.0 * e.dE_J, u2 = e.E_L + 2.0 * e.dE_J, u3 = e.E_L + 2.0 * e.E_J;
  SaddleFrequencies f{std::sqrt(8.0 * E_C * u1), std::sqrt(8.0 * E_C * u2), std::sqrt(8.0 * E_C * u3)};
  if (quartic) {
    f.f_b1 += quartic_shift(E_C, u1, 2.0 * e.dE_J);
    f.f_b2 += quartic_shift(E_C, u2, -2.0 * e.dE_J);
    f.f_bmax += quartic_shift(E_C, u3, -2.0 * e.E_J);
  }
  return f;
}

AtsEnergies extract_params_quartic(double f_b1, double f_b2, double f_bmax, double E_C) {
  AtsEnergies e = extract_params(f_b1, f_b2, f_bmax, E_C);
  for (int it = 0; it < 50; ++it) {
    auto harm = forward_frequencies(E_C, e, false), full = forward_frequencies(E_C, e, true);
    AtsEnergies next = extract_params(f_b1 - (full.f_b1 - harm.f_b1), f_b2 - (full.f_b2 - harm.f_b2),
                                      f_bmax - (full.f_bmax - harm.f_bmax), E_C);
    bool done = std::abs(next.dE_J - e.dE_J) < 1e-12 * e.E_L && std::abs(next.E_J - e.E_J) < 1e-12 * e.E_L;
    e = next;
    if (done) return e;
  }
  throw Error(ErrorKind::NonConvergence, "quartic extraction did not converge");
}

KerrEstimate memory_kerr_estimate(const AtsParams& p, const FluxPoint& fp) {
  check_params(p);
  double phi_b = std::pow(2.0 * p.E_C / p.E_L, 0.25);
  double u4 = josephson(p, fp, potential_minimum(p, fp), 4);
  KerrEstimate k;
  k.K = 0.5 * std::abs(u4) * std::pow(p.upsilon * phi_b, 4);
  return k;
}

}  // namespace catsim
