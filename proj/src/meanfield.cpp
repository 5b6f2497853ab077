#include "catsim/meanfield.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

#include "catsim/error.hpp"
#include "catsim/parallel.hpp"

namespace catsim {

namespace {
const cplx I1(0.0, 1.0);
}

double nbar_zero_detuning(cplx eps_d, cplx g2, double kappa_a, double kappa_b) {
  double g = std::abs(g2);
  if (g == 0.0) return 0.0;
  return std::max(std::abs(eps_d) / g - kappa_a * kappa_b / (8.0 * g * g), 0.0);
}

double critical_drive(cplx g2, double kappa_a, double kappa_b) {
  return kappa_a * kappa_b / (8.0 * std::abs(g2));
}

cplx z_aux(const TwoModeParams& p) {
  return cplx(p.delta_a, p.kappa_a / 2.0) * cplx(p.delta_b, p.kappa_b / 2.0) / (2.0 * std::norm(p.g2));
}

double nbar_detuned(const TwoModeParams& p) {
  if (std::abs(p.g2) == 0.0) return 0.0;
  cplx z = z_aux(p);
  double R2 = std::norm(p.eps_d / std::conj(p.g2));
  double im2 = z.imag() * z.imag();
  if (R2 <= im2) return 0.0;
  return std::max(z.real() + std::sqrt(R2 - im2), 0.0);
}

BranchSet steady_branches(const TwoModeParams& p) {
  BranchSet out;
  SteadyBranch vac;
  vac.beta = -p.eps_d / cplx(p.delta_b, p.kappa_b / 2.0);
  vac.tag = BranchTag::Vacuum;
  vac.z = std::abs(p.g2) > 0 ? z_aux(p) : cplx(0.0);
  out.solutions.push_back(vac);
  out.selected = vac;
  if (std::abs(p.g2) == 0.0 || std::abs(p.eps_d) == 0.0) return out;
  cplx z = z_aux(p);
  double R2 = std::norm(p.eps_d / std::conj(p.g2));
  double im2 = z.imag() * z.imag();
  if (R2 <= im2) return out;
  double s = std::sqrt(R2 - im2);
  for (double n : {z.real() + s, z.real() - s}) {
    if (n <= 0.0) continue;
    // n = (eps_d/g2^*) e^{-2i theta} + z
    cplx e = (n - z) * std::conj(p.g2) / p.eps_d;
    double theta = -0.5 * std::arg(e);
    for (double shift : {0.0, std::numbers::pi}) {
      SteadyBranch b;
      b.nbar = n;
      b.z = z;
      b.tag = BranchTag::Bright;
      b.alpha = std::polar(std::sqrt(n), theta + shift);
      b.beta = cplx(p.delta_a, p.kappa_a / 2.0) * std::exp(2.0 * I1 * (theta + shift)) / (2.0 * p.g2);
      out.solutions.push_back(b);
      if (b.nbar > out.selected.nbar) out.selected = b;
    }
  }
  return out;
}

double branch_residual(const TwoModeParams& p, const SteadyBranch& b) {
  cplx da = (I1 * p.delta_a - p.kappa_a / 2.0) * b.alpha - 2.0 * I1 * p.g2 * std::conj(b.alpha) * b.beta;
  cplx db = (I1 * p.delta_b - p.kappa_b / 2.0) * b.beta - I1 * std::conj(p.g2) * b.alpha * b.alpha + I1 * p.eps_d;
  return std::max(std::abs(da), std::abs(db));
}

std::vector<double> symmetric_grid(double half_width, int n) {
  if (n < 1 || n % 2 == 0) throw Error(ErrorKind::InvalidArgument, "grid needs an odd point count");
  std::vector<double> g(n);
  int h = n / 2;
  for (int i = 0; i < n; ++i) g[i] = h == 0 ? 0.0 : half_width * double(i - h) / h;
  return g;
}

NbarMap nbar_map(const TwoModeParams& base, const std::vector<double>& delta_a, const std::vector<double>& delta_b) {
  NbarMap m;
  m.delta_a = delta_a;
  m.delta_b = delta_b;
  m.nbar.resize(delta_b.size(), delta_a.size());
  parallel_for(int(delta_b.size()), [&](int r) {
    TwoModeParams p = base;
    p.delta_b = delta_b[r];
    for (std::size_t c = 0; c < delta_a.size(); ++c) {
      p.delta_a = delta_a[c];
      m.nbar(r, c) = nbar_detuned(p);
    }
  });
  return m;
}

void write_map_csv(std::ostream& os, const NbarMap& m, double axis_scale) {
  os.precision(17);
  os << "delta_b\\delta_a";
  for (double a : m.delta_a) os << "," << a * axis_scale;
  os << "\n";
  for (std::size_t r = 0; r < m.delta_b.size(); ++r) {
    os << m.delta_b[r] * axis_scale;
    for (std::size_t c = 0; c < m.delta_a.size(); ++c) os << "," << m.nbar(r, c);
    os << "\n";
  }
}

int DiamondEdges::domain(double da, double db) const {
  double s = da * db - kappa_a * kappa_b / 4.0;
  return s > 0 ? 1 : (s < 0 ? -1 : 0);
}

bool DiamondEdges::inside(double da, double db) const {
  double lin = kappa_a * db + kappa_b * da;
  if (std::abs(lin) >= 4.0 * product) return false;
  if (domain(da, db) > 0) return true;
  return (kappa_a * kappa_a / 4.0 + da * da) * (kappa_b * kappa_b / 4.0 + db * db) < 4.0 * product * product;
}

DiamondEdges diamond_edges(double product, double kappa_a, double kappa_b, int samples) {
  if (product <= 0.0) throw Error(ErrorKind::InvalidArgument, "eps_d*g2 product must be positive");
  if (kappa_a <= 0.0 || kappa_b <= 0.0) throw Error(ErrorKind::InvalidArgument, "loss rates must be positive");
  DiamondEdges e;
  e.product = product;
  e.kappa_a = kappa_a;
  e.kappa_b = kappa_b;
  double P = product;
  // both edge families live within |Delta_a| <= 4P/kappa_b
  double amax = 4.0 * P / kappa_b;
  EdgeCurve tr{"top-right", {}, {}}, bl{"bottom-left", {}, {}}, c2{"curved-upper-left", {}, {}},
      c4{"curved-lower-right", {}, {}};
  for (int i = 0; i < samples; ++i) {
    double da = -amax + 2.0 * amax * i / (samples - 1);
    for (int sgn : {1, -1}) {
      double db = (sgn * 4.0 * P - kappa_b * da) / kappa_a;
      if (da * db - kappa_a * kappa_b / 4.0 > 0) {
        EdgeCurve& c = sgn > 0 ? tr : bl;
        c.delta_a.push_back(da);
        c.delta_b.push_back(db);
      }
    }
    double q = 4.0 * P * P / (kappa_a * kappa_a / 4.0 + da * da) - kappa_b * kappa_b / 4.0;
    if (q >= 0) {
      double r = std::sqrt(q);
      for (double db : {r, -r}) {
        if (da * db - kappa_a * kappa_b / 4.0 < 0) {
          EdgeCurve& c = db > 0 ? c2 : c4;
          c.delta_a.push_back(da);
          c.delta_b.push_back(db);
        }
      }
    }
  }
  e.curves = {tr, bl, c2, c4};
  return e;
}

double edge_slope_from_map(const NbarMap& m) {
  std::vector<double> xs, ys;
  const auto& A = m.delta_a;
  for (std::size_t r = 0; r < m.delta_b.size(); ++r) {
    if (m.delta_b[r] <= 0.0) continue;
    for (int c = int(A.size()) - 2; c >= 0; --c) {
      if (m.nbar(r, c) > 0.0 && m.nbar(r, c + 1) == 0.0) {
        double x = 0.5 * (A[c] + A[c + 1]);
        if (x > 0.0) {
          xs.push_back(x);
          ys.push_back(m.delta_b[r]);
        }
        break;
      }
    }
  }
  std::size_t n = xs.size();
  std::size_t lo = n / 10, hi = n - n / 10;
  if (hi < lo + 3) throw Error(ErrorKind::DegenerateFit, "too few edge pixels in the top-right quadrant");
  // regress x on Delta_b: x = Delta_b / slope + c
  double my = 0, mx = 0;
  for (std::size_t i = lo; i < hi; ++i) {
    my += ys[i];
    mx += xs[i];
  }
  my /= double(hi - lo);
  mx /= double(hi - lo);
  double syy = 0, sxy = 0;
  for (std::size_t i = lo; i < hi; ++i) {
    syy += (ys[i] - my) * (ys[i] - my);
    sxy += (ys[i] - my) * (xs[i] - mx);
  }
  if (sxy == 0.0) throw Error(ErrorKind::DegenerateFit, "vertical edge");
  return syy / sxy;
}

FlowResult meanfield_flow(const TwoModeParams& p, cplx alpha0, cplx beta0, double T, int samples,
                          const OdeOptions& opt) {
  if (T <= 0 || samples < 2) throw Error(ErrorKind::InvalidArgument, "flow needs T > 0 and at least two samples");
  FlowResult r;
  r.times.resize(samples);
  for (int k = 0; k < samples; ++k) r.times[k] = T * k / (samples - 1);
  r.alpha.resize(samples);
  r.beta.resize(samples);
  auto f = [&](double, const Eigen::Vector2cd& y, Eigen::Vector2cd& dy) {
    cplx a = y[0], b = y[1];
    dy[0] = (I1 * p.delta_a - p.kappa_a / 2.0) * a - 2.0 * I1 * p.g2 * std::conj(a) * b;
    dy[1] = (I1 * p.delta_b - p.kappa_b / 2.0) * b - I1 * std::conj(p.g2) * a * a + I1 * p.eps_d;
  };
  auto obs = [&](int k, const Eigen::Vector2cd& y) {
    r.alpha[k] = y[0];
    r.beta[k] = y[1];
  };
  try {
    integrate_dp45<Eigen::Vector2cd>(f, Eigen::Vector2cd(alpha0, beta0), r.times, obs, opt);
  } catch (const Error& e) {
    throw Error(ErrorKind::NonConvergence, std::string("mean-field integration failed: ") + e.what());
  }
  return r;
}

double quantum_nbar(const ReducedParams& p, const QuantumCurveOptions& opt, int* dim_used) {
  int dim = opt.dim;
  if (dim <= 0) dim = std::max(opt.min_dim, min_dim(expected_nbar(p), opt.policy) + opt.margin);
  if (dim_used) *dim_used = dim;
  auto spec = reduced_model(p, dim, opt.policy);
  SteadyStateOptions so;
  so.check_kernel = opt.check_kernel;
  auto rho = steady_state(build_liouvillian(spec), so);
  return expect(number(dim), rho).real();
}

QuantumClassicalCurve quantum_vs_classical_curve(cplx g2, double kappa_a, double kappa_b,
                                                 const std::vector<double>& eps_d,
                                                 const QuantumCurveOptions& opt) {
  QuantumClassicalCurve c;
  c.eps_d = eps_d;
  c.classical.resize(eps_d.size());
  c.quantum.resize(eps_d.size());
  c.dims.resize(eps_d.size());
  parallel_for(int(eps_d.size()), [&](int k) {
    c.classical[k] = nbar_zero_detuning(eps_d[k], g2, kappa_a, kappa_b);
    auto m = adiabatic_map(g2, eps_d[k], kappa_b, 0.0);
    ReducedParams p;
    p.eps2 = m.eps2;
    p.kappa2 = m.kappa2;
    p.kappa_a = kappa_a;
    c.quantum[k] = quantum_nbar(p, opt, &c.dims[k]);
  });
  return c;
}

}  // namespace catsim
