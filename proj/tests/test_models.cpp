#include <cmath>

#include "catsim/error.hpp"
#include "catsim/meanfield.hpp"
#include "catsim/models.hpp"
#include "doctest.h"

using namespace catsim;

TEST_CASE("reduced model without two-photon terms is a damped cavity") {
  ReducedParams p;
  p.kappa_a = 0.7;
  p.delta_a = 0.2;
  auto spec = reduced_model(p, 8);
  CHECK(spec.collapse_ops.size() == 1);
  DenseMat want = -0.2 * number(8).dense();
  CHECK((spec.H.dense() - want).norm() < 1e-15);
  DenseMat c = spec.collapse_ops[0].dense();
  CHECK((c - std::sqrt(0.7) * annihilation(8).dense()).norm() < 1e-15);
}

TEST_CASE("pointer-state photon number") {
  ReducedParams p;
  p.eps2 = kTwoPi * 1e3;
  p.kappa2 = kTwoPi * 0.37e3;
  CHECK(expected_nbar(p) == doctest::Approx(2.0 / 0.37).epsilon(1e-12));
  CHECK(std::abs(expected_nbar(p) - 5.405) < 1e-3);
  p.kappa_a = kTwoPi * 0.2e3;
  CHECK(expected_nbar(p) == doctest::Approx(2.0 / 0.37 * (1.0 - 0.05)).epsilon(1e-12));
  CHECK_THROWS_AS(reduced_model(p, 10), Error);
  CHECK_NOTHROW(reduced_model(p, 21));
}

TEST_CASE("paper loss-ratio regime") {
  double ratio = 58e3 / 370.0;
  CHECK(std::abs(ratio / 150.0 - 1.0) < 0.05);
}

TEST_CASE("truncation policies") {
  CHECK(min_dim(4.0, TruncationPolicy::FourTimesMean) == 16);
  int d = min_dim(150.0, TruncationPolicy::PoissonTail);
  CHECK(d > 150 + 5 * 12);
  CHECK(d < 150 + 7 * 13);
}

TEST_CASE("two-mode model basics") {
  TwoModeParams p;
  p.eps_d = cplx(0.8, 0.3);
  p.delta_b = 0.4;
  p.kappa_a = 0.5;
  p.kappa_b = 2.0;
  Dims dims{4, 12};
  auto spec = two_mode_model(p, dims);
  CHECK(spec.H.hermiticity_error() < 1e-12);
  auto rho = steady_state(build_liouvillian(spec));
  cplx beta = expect(embed(annihilation(12), dims, 1), rho);
  cplx want = -p.eps_d / cplx(p.delta_b, p.kappa_b / 2.0);
  CHECK(std::abs(beta - want) < 1e-8);
  CHECK(std::abs(expect(embed(annihilation(4), dims, 0), rho)) < 1e-12);

  p.g2 = cplx(0.3, -0.2);
  CHECK(two_mode_model(p, dims).H.hermiticity_error() < 1e-12);
  CHECK_THROWS_AS(two_mode_model(p, {4, 3}), Error);
  CHECK_THROWS_AS(two_mode_model(p, {4}), Error);
}

TEST_CASE("adiabatic map") {
  auto m = adiabatic_map(kTwoPi * 39e3, kTwoPi * 3e6, kTwoPi * 16e6, 0.0);
  double k2 = m.kappa2 / kTwoPi;
  CHECK(k2 == doctest::Approx(380.25).epsilon(1e-12));
  CHECK(k2 >= 270.0);
  CHECK(k2 <= 410.0);
  CHECK(m.kerr == 0.0);
  CHECK(std::abs(m.eps2 - cplx(2.0 * 39e3 * 3e6 / 16e6 * kTwoPi, 0.0)) < 1e-9 * std::abs(m.eps2));

  cplx g2(1.3, 0.4);
  double kb = 7.0;
  auto h = adiabatic_map(g2, 1.0, kb, kb / 2.0);
  cplx gamma = g2 / (kb / 2.0 + cplx(0.0, 1.0) * kb / 2.0);
  CHECK(std::abs(std::norm(h.gamma) - std::norm(g2) / (kb * kb / 2.0)) < 1e-14);
  CHECK(std::abs(h.gamma - gamma) < 1e-15);
  CHECK(h.kerr == doctest::Approx(kb / 2.0 * std::norm(gamma)));
}

TEST_CASE("reduced and two-mode steady states agree in the adiabatic regime") {
  TwoModeParams p;
  p.g2 = 1.0;
  p.kappa_b = 100.0;
  double k2 = 4.0 / p.kappa_b;
  p.kappa_a = k2;
  p.eps_d = (k2 * 3.0 / 2.0 + p.kappa_a / 4.0) * p.kappa_b / 2.0;
  auto rp = reduced_from_two_mode(p);
  QuantumCurveOptions o;
  o.dim = 16;
  double nr = quantum_nbar(rp, o);
  Dims dims{16, 4};
  auto rho = steady_state(build_liouvillian(two_mode_model(p, dims)));
  double nt = expect(embed(number(16), dims, 0), rho).real();
  CHECK(std::abs(nt / nr - 1.0) < 0.10);
}

TEST_CASE("phase covariance of the reduced model") {
  const int N = 16;
  ReducedParams p;
  p.eps2 = 1.0;
  p.kappa2 = 1.0;
  p.kappa_a = 0.5;
  auto a = annihilation(N);
  auto rho0 = steady_state(build_liouvillian(reduced_model(p, N)));
  cplx a2_0 = expect(a * a, rho0);
  double theta = 0.9;
  p.eps2 = std::polar(1.0, theta);
  auto rho1 = steady_state(build_liouvillian(reduced_model(p, N)));
  cplx a2_1 = expect(a * a, rho1);
  CHECK(std::abs(a2_1 - a2_0 * std::polar(1.0, theta)) < 1e-8);
  CHECK(std::abs(expect(a, rho1)) < 1e-10);
}

TEST_CASE("Kerr mean field") {
  KerrParams k;
  k.K = 0.5;
  k.eps2 = 1.5;
  CHECK(kerr_meanfield_nbar(k) == doctest::Approx(2.0 * k.eps2 / k.K));
  k.kappa_a = 4.0 * k.eps2;
  CHECK(kerr_meanfield_nbar(k) == 0.0);
  k.kappa_a = 8.0;
  CHECK(kerr_meanfield_nbar(k) == 0.0);

  // the quoted steady state solves the Kerr-model mean-field equation
  // 0 = 2 eps2 alpha^* - i K |alpha|^2 alpha - kappa_a alpha / 2
  k.kappa_a = 1.0;
  k.eps2 = 2.0;
  double n = kerr_meanfield_nbar(k);
  double lhs = 4.0 * k.eps2 * k.eps2;
  double rhs = k.kappa_a * k.kappa_a / 4.0 + k.K * k.K * n * n;
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  auto spec = kerr_model(k, 12);
  CHECK(spec.H.hermiticity_error() < 1e-12);
  DenseMat a = annihilation(12).dense();
  DenseMat want = -0.5 * k.K * (a.adjoint() * a.adjoint() * a * a);
  DenseMat H = spec.H.dense();
  CHECK((H.diagonal() - want.diagonal()).norm() < 1e-12);
}

TEST_CASE("asymptote discriminates Kerr from two-photon loss") {
  double kappa_a = 1.0;
  std::vector<double> eps, nk, n2;
  for (int i = 0; i <= 40; ++i) {
    double e = 10.0 + 5.0 * i;
    eps.push_back(e);
    nk.push_back(kerr_meanfield_nbar({0.3, e, kappa_a}));
    n2.push_back(two_photon_meanfield_nbar(e, 0.3, kappa_a));
  }
  auto fk = fit_asymptote(eps, nk, 10, kappa_a / 8.0);
  auto f2 = fit_asymptote(eps, n2, 10, kappa_a / 8.0);
  CHECK(fk.through_origin);
  CHECK_FALSE(f2.through_origin);
  CHECK(f2.intercept_x == doctest::Approx(kappa_a / 4.0));
}

TEST_CASE("circuit-derived quantities") {
  AtsParams a;
  a.E_C = 72.6e6;
  a.E_L = 62.40e9;
  a.E_J = 37.00e9;
  a.dE_J = 0.207e9;
  a.upsilon = 0.036;
  auto d = circuit_derived(a, 0.1);
  CHECK(std::abs(d.phi_b - 0.220) < 0.001);
  CHECK(std::abs(d.omega_b0 / kTwoPi - 6.020e9) < 5e6);
  auto m = circuit_derived(a, -0.1);
  CHECK(m.g2 == doctest::Approx(-d.g2));
  CHECK(d.g2 < 0.0);
  CHECK(circuit_derived(a, 0.1, FluxConvention::SigmaPlusHalfPi).g2 == doctest::Approx(-d.g2));
}
