#include "catsim/models.hpp"

#include <cmath>
#include <sstream>

#include <boost/math/distributions/poisson.hpp>

#include "catsim/error.hpp"

namespace catsim {

double two_photon_meanfield_nbar(double eps2, double kappa2, double kappa_a) {
  if (kappa2 <= 0.0) return 0.0;
  return std::max(2.0 / kappa2 * (std::abs(eps2) - kappa_a / 4.0), 0.0);
}

double expected_nbar(const ReducedParams& p) { return two_photon_meanfield_nbar(std::abs(p.eps2), p.kappa2, p.kappa_a); }

int min_dim(double nbar, TruncationPolicy policy) {
  if (nbar <= 0.0) return 2;
  if (policy == TruncationPolicy::FourTimesMean) return std::max(2, int(std::ceil(4.0 * nbar)));
  boost::math::poisson_distribution<double> pois(nbar);
  int d = std::max(2, int(nbar));
  while (boost::math::cdf(boost::math::complement(pois, double(d - 1))) >= 1e-8) ++d;
  return d;
}

ModelSpec reduced_model(const ReducedParams& p, int dim, TruncationPolicy policy) {
  if (p.kappa2 < 0.0 || p.kappa_a < 0.0) throw Error(ErrorKind::InvalidArgument, "loss rates must be nonnegative");
  double nb = expected_nbar(p);
  int need = min_dim(nb, policy);
  if (dim < need) {
    std::ostringstream os;
    os << "dim " << dim << " too small for expected nbar " << nb << " (need " << need << ")";
    throw Error(ErrorKind::TruncationTooSmall, os.str());
  }
  auto a = annihilation(dim);
  auto ad = a.adjoint();
  auto a2 = a * a;
  auto ad2 = ad * ad;
  const cplx im(0.0, 1.0);
  OperatorMatrix H = (ad * a) * cplx(-p.delta_a) + ad2 * (im * p.eps2) - a2 * (im * std::conj(p.eps2));
  if (p.kerr != 0.0) H = H + (ad2 * a2) * cplx(p.kerr);
  H.mark_hermitian();
  ModelSpec spec{H, {}};
  if (p.kappa2 > 0.0) spec.collapse_ops.push_back(a2 * cplx(std::sqrt(p.kappa2)));
  if (p.kappa_a > 0.0) spec.collapse_ops.push_back(a * cplx(std::sqrt(p.kappa_a)));
  return spec;
}

ModelSpec two_mode_model(const TwoModeParams& p, const Dims& dims) {
  if (dims.size() != 2) throw Error(ErrorKind::DimensionMismatch, "two-mode model needs dims {memory, buffer}");
  if (dims[1] < 4) throw Error(ErrorKind::DimensionMismatch, "buffer dim must be at least 4");
  if (p.kappa_a < 0.0 || p.kappa_b < 0.0) throw Error(ErrorKind::InvalidArgument, "loss rates must be nonnegative");
  auto a = embed(annihilation(dims[0]), dims, 0);
  auto b = embed(annihilation(dims[1]), dims, 1);
  auto ad = a.adjoint();
  auto bd = b.adjoint();
  OperatorMatrix H = (ad * a) * cplx(-p.delta_a) + (bd * b) * cplx(-p.delta_b) + (a * a * bd) * std::conj(p.g2) +
                     (ad * ad * b) * p.g2 - bd * p.eps_d - b * std::conj(p.eps_d);
  H.mark_hermitian();
  ModelSpec spec{H, {}};
  if (p.kappa_a > 0.0) spec.collapse_ops.push_back(a * cplx(std::sqrt(p.kappa_a)));
  if (p.kappa_b > 0.0) spec.collapse_ops.push_back(b * cplx(std::sqrt(p.kappa_b)));
  return spec;
}

AdiabaticResult adiabatic_map(cplx g2, cplx eps_d, double kappa_b, double delta_b) {
  if (kappa_b <= 0.0) throw Error(ErrorKind::InvalidArgument, "kappa_b must be positive");
  AdiabaticResult r;
  r.gamma = g2 / cplx(delta_b, kappa_b / 2.0);
  r.eps2 = cplx(0.0, 1.0) * eps_d * r.gamma;
  r.kappa2 = kappa_b * std::norm(r.gamma);
  r.kerr = delta_b * std::norm(r.gamma);
  return r;
}

ReducedParams reduced_from_two_mode(const TwoModeParams& p) {
  auto m = adiabatic_map(p.g2, p.eps_d, p.kappa_b, p.delta_b);
  ReducedParams r;
  r.eps2 = m.eps2;
  r.kappa2 = m.kappa2;
  r.kappa_a = p.kappa_a;
  r.delta_a = p.delta_a;
  r.kerr = p.delta_b != 0.0 ? m.kerr : 0.0;
  return r;
}

ModelSpec kerr_model(const KerrParams& p, int dim) {
  if (p.K <= 0.0) throw Error(ErrorKind::InvalidArgument, "Kerr rate must be positive");
  auto a = annihilation(dim);
  auto ad = a.adjoint();
  const cplx im(0.0, 1.0);
  OperatorMatrix H = (ad * ad) * (im * p.eps2) - (a * a) * (im * p.eps2) - (ad * ad * a * a) * cplx(p.K / 2.0);
  H.mark_hermitian();
  ModelSpec spec{H, {}};
  if (p.kappa_a > 0.0) spec.collapse_ops.push_back(a * cplx(std::sqrt(p.kappa_a)));
  return spec;
}

double kerr_meanfield_nbar(const KerrParams& p) {
  if (p.K <= 0.0) throw Error(ErrorKind::InvalidArgument, "Kerr rate must be positive");
  double d = 16.0 * p.eps2 * p.eps2 - p.kappa_a * p.kappa_a;
  if (p.eps2 < p.kappa_a / 4.0 || d <= 0.0) return 0.0;
  return std::sqrt(d) / (2.0 * p.K);
}

AsymptoteFit fit_asymptote(const std::vector<double>& x, const std::vector<double>& y, int tail_points,
                           double origin_tol) {
  if (x.size() != y.size() || tail_points < 2 || int(x.size()) < tail_points)
    throw Error(ErrorKind::InvalidArgument, "need at least two tail points");
  std::size_t s = x.size() - tail_points;
  double mx = 0, my = 0;
  for (std::size_t i = s; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= tail_points;
  my /= tail_points;
  double sxx = 0, sxy = 0;
  for (std::size_t i = s; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0) throw Error(ErrorKind::DegenerateFit, "tail points share one abscissa");
  AsymptoteFit f;
  f.slope = sxy / sxx;
  if (f.slope == 0.0) throw Error(ErrorKind::DegenerateFit, "flat asymptote");
  f.intercept_x = mx - my / f.slope;
  f.through_origin = std::abs(f.intercept_x) < origin_tol;
  return f;
}

CircuitDerived circuit_derived(const AtsParams& p, double eps_p, FluxConvention conv) {
  if (p.E_C <= 0 || p.E_L <= 0 || p.E_J <= 0) throw Error(ErrorKind::InvalidArgument, "energies must be positive");
  CircuitDerived d;
  d.phi_b = std::pow(2.0 * p.E_C / p.E_L, 0.25);
  d.omega_b0 = kTwoPi * std::sqrt(8.0 * p.E_L * p.E_C);
  double sign = conv == FluxConvention::SigmaMinusHalfPi ? -1.0 : 1.0;
  d.g2 = kTwoPi * sign * 0.5 * p.E_J * eps_p * p.upsilon * p.upsilon * std::pow(d.phi_b, 3);
  return d;
}

}  // namespace catsim
