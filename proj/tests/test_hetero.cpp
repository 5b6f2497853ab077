#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <numeric>

#include "catsim/error.hpp"
#include "catsim/hetero.hpp"
#include "catsim/models.hpp"
#include "doctest.h"

using namespace catsim;

namespace {

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size()); }

double var_of(const std::vector<double>& v) {
  double m = mean_of(v), s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / double(v.size() - 1);
}

IQMeta lab_meta(double eta = 0.07) {
  IQMeta m;
  m.G = 3.0;
  m.T_m = 1e-3;
  m.eta = eta;
  m.kappa_c = kTwoPi * 40e3;
  return m;
}

// Damped cavity driven on resonance: H = i eps (a^dag - a), steady <a> = 2 eps / kappa.
ModelSpec driven_cavity(int dim, double eps, double kappa) {
  auto a = annihilation(dim);
  auto H = (a.adjoint() - a) * cplx(0.0, eps);
  H.mark_hermitian();
  return {H, {a * std::sqrt(kappa)}};
}

}  // namespace

TEST_CASE("telegraph noise normalization") {
  IQMeta m = lab_meta(0.0);
  auto s = synth_telegraph(28.0, 0.3, m, 20.0, 11);
  CHECK(s.size() == 20000);
  double want = m.G * m.T_m;
  double se = want * std::sqrt(2.0 / double(s.size()));
  CHECK(std::abs(var_of(s.I) - want) < 3.0 * se);
  CHECK(std::abs(var_of(s.Q) - want) < 3.0 * se);
  CHECK(s.meta.seed == 11);
}

TEST_CASE("telegraph guards and the no-flip limit") {
  IQMeta m = lab_meta();
  CHECK_THROWS_AS(synth_telegraph(28.0, 1e-3, m, 1.0, 1), Error);
  try {
    synth_telegraph(28.0, 5e-4, m, 1.0, 1);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::UnresolvableJumps);
  }
  IQMeta bad = m;
  bad.eta = 1.5;
  CHECK_THROWS_AS(synth_telegraph(28.0, 0.3, bad, 1.0, 1), Error);

  auto s = synth_telegraph(28.0, std::numeric_limits<double>::infinity(), m, 5.0, 3);
  int flips = 0;
  for (std::size_t k = 1; k < s.size(); ++k) flips += (s.I[k] > 0) != (s.I[k - 1] > 0);
  CHECK(flips == 0);
}

TEST_CASE("telegraph histogram centers") {
  IQMeta m = lab_meta();
  const double nbar = 28.0;
  auto s = synth_telegraph(nbar, 0.3, m, 200.0, 5);
  double center = std::sqrt(m.G * 2.0 * m.kappa_c * m.eta * nbar) * m.T_m;
  double sp = 0.0, sn = 0.0;
  long np = 0, nn = 0;
  for (double v : s.I) {
    if (v > 0) {
      sp += v;
      ++np;
    } else {
      sn += v;
      ++nn;
    }
  }
  // flips inside a window pull a few samples toward zero: about T_m/T_bf of them
  CHECK(std::abs(sp / np / center - 1.0) < 0.01);
  CHECK(std::abs(-sn / nn / center - 1.0) < 0.01);
  double p = double(np) / double(np + nn);
  // dwell statistics: ~670 flips in 200 s, so occupation fluctuates by ~ sqrt(T_bf/(2 dur))
  CHECK(std::abs(p - 0.5) < 5.0 * std::sqrt(0.3 / 400.0));
}

TEST_CASE("vacuum power and gain linearity") {
  IQMeta m = lab_meta();
  auto vac = synth_telegraph(0.0, 0.3, m, 20.0, 9);
  Moment p = iq_power(vac);
  CHECK(std::abs(p.mean - 2.0 * m.G * m.T_m) < 3.0 * p.stderr_);
  CHECK(vacuum_offset(m) == 2.0 * m.G * m.T_m);

  IQMeta m2 = m;
  m2.G = 2.0 * m.G;
  auto vac2 = synth_telegraph(0.0, 0.3, m2, 20.0, 9);
  CHECK(iq_power(vac2).mean == doctest::Approx(2.0 * p.mean).epsilon(1e-12));

  PhotonEstimate e = photon_from_trace(vac, m.G, m.kappa_c, m.eta);
  CHECK(e.nbar <= 3.0 * e.stderr_);

  IQSeries tiny;
  CHECK_THROWS_AS(iq_power(tiny), Error);
}

TEST_CASE("photon number from power") {
  IQMeta m = lab_meta();
  auto s11 = synth_telegraph(11.0, 0.3, m, 20.0, 21);
  auto ref = synth_telegraph(0.0, 0.3, m, 20.0, 22);
  Moment ex = iq_power_excess(s11, ref);
  double want = 2.0 * m.G * m.kappa_c * m.eta * m.T_m * m.T_m * 11.0;
  CHECK(std::abs(ex.mean / want - 1.0) < 0.05);
  CHECK(std::abs(iq_power_excess(s11).mean / want - 1.0) < 0.05);

  auto s28 = synth_telegraph(28.0, 0.3, m, 20.0, 23);
  auto e = photon_from_trace(s28, m.G, m.kappa_c, m.eta);
  CHECK_FALSE(e.clipped);
  CHECK(std::abs(e.nbar / 28.0 - 1.0) < 0.05);

  // re-binning to 2 T_m leaves the estimate unchanged within errors
  auto r = rebin(s28, 2);
  CHECK(r.meta.T_m == 2.0 * m.T_m);
  CHECK(r.size() == s28.size() / 2);
  auto e2 = photon_from_trace(r, m.G, m.kappa_c, m.eta);
  CHECK(std::abs(e2.nbar - e.nbar) < 3.0 * std::hypot(e.stderr_, e2.stderr_));
}

TEST_CASE("efficiency from a fixed coherent state") {
  for (double eta : {0.07, 0.03}) {
    IQMeta m = lab_meta(eta);
    m.T_m = 1e-4;
    auto s = synth_telegraph(4.0, std::numeric_limits<double>::infinity(), m, 10.0, 31);
    double got = efficiency_from_coherent(s, 4.0, m.kappa_c, m.T_m);
    CHECK(std::abs(got / eta - 1.0) < 0.10);
    IQMeta mg = m;
    mg.G = 17.0 * m.G;
    auto sg = synth_telegraph(4.0, std::numeric_limits<double>::infinity(), mg, 10.0, 31);
    CHECK(efficiency_from_coherent(sg, 4.0, m.kappa_c, m.T_m) == doctest::Approx(got).epsilon(1e-10));
  }
}

TEST_CASE("normalized view") {
  IQMeta m = lab_meta();
  auto s = synth_telegraph(9.0, std::numeric_limits<double>::infinity(), m, 2.0, 4);
  auto v = normalized(s);
  CHECK(v.x.size() == s.size());
  CHECK(std::abs(std::abs(mean_of(v.x)) - 3.0) < 0.1);
  CHECK(std::abs(mean_of(v.p)) < 0.1);
  CHECK(s.I[0] != v.x[0]);
}

TEST_CASE("CSV round trip is bit exact") {
  auto s = synth_telegraph(3.0, 0.05, lab_meta(), 0.5, 77);
  auto dir = std::filesystem::temp_directory_path() / "catsim_hetero_test";
  std::filesystem::create_directories(dir);
  std::string path = (dir / "trace.csv").string();
  write_series(path, s);
  CHECK(std::filesystem::exists(dir / "trace.json"));
  auto r = read_series(path);
  CHECK(r.I == s.I);
  CHECK(r.Q == s.Q);
  CHECK(r.meta.seed == 77);
  CHECK(r.meta.kappa_c == s.meta.kappa_c);
  CHECK(r.meta.generator == "telegraph");
  CHECK_THROWS_AS(read_series((dir / "missing.csv").string()), Error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("SME without signal is pure noise") {
  auto spec = driven_cavity(6, 0.0, 1.0);
  IQMeta m;
  m.G = 2.5;
  m.T_m = 0.05;
  m.eta = 0.0;
  m.kappa_c = 1.0;
  auto s = synth_sme(spec, m, 100.0, 5);
  CHECK(s.size() == 2000);
  double want = m.G * m.T_m, se = want * std::sqrt(2.0 / 2000.0);
  CHECK(std::abs(var_of(s.I) - want) < 3.0 * se);
  CHECK(std::abs(var_of(s.Q) - want) < 3.0 * se);

  // monitored vacuum: no signal either
  m.eta = 1.0;
  auto v = synth_sme(spec, m, 100.0, 6);
  CHECK(std::abs(mean_of(v.I)) < 4.0 * std::sqrt(var_of(v.I) / double(v.size())));

  m.kappa_c = 2.0;
  CHECK_THROWS_AS(synth_sme(spec, m, 1.0, 6), Error);
  m.kappa_c = 1.0;
  m.eta = -0.1;
  CHECK_THROWS_AS(synth_sme(spec, m, 1.0, 6), Error);
}

TEST_CASE("SME coherent steady state obeys the efficiency relation") {
  const int dim = 22;
  const double kappa = 1.0, nbar = 4.0;
  auto spec = driven_cavity(dim, kappa * std::sqrt(nbar) / 2.0, kappa);
  IQMeta m;
  m.T_m = 0.5;
  m.eta = 1.0;
  m.kappa_c = kappa;
  DensityMatrix rho0 = DensityMatrix::pure(coherent(dim, std::sqrt(nbar)));
  SmeDiagnostics d;
  auto s = synth_sme(spec, rho0, m, 450.0, 8, {}, &d);
  CHECK(d.substeps >= 20);
  double ratio = mean_of(s.I) / std::sqrt(var_of(s.I));
  double want = std::sqrt(2.0 * kappa * m.eta * nbar * m.T_m);
  CHECK(std::abs(ratio / want - 1.0) < 0.05);
}

TEST_CASE("SME halving check") {
  ReducedParams p;
  p.eps2 = 0.5;
  p.kappa2 = 1.0;
  p.kappa_a = 0.5;
  auto spec = reduced_model(p, 12);
  IQMeta m;
  m.T_m = 0.05;
  m.kappa_c = 0.5;
  SmeOptions o;
  o.halving_check = true;
  SmeDiagnostics d;
  synth_sme(spec, DensityMatrix::pure(coherent(12, 1.0)), m, 1.0, 3, o, &d);
  CHECK(d.halving_error >= 0.0);
  CHECK(d.halving_error < o.halving_tol);
}

TEST_CASE("SME ensemble reproduces the master equation") {
  const int dim = 12;
  ReducedParams p;
  p.eps2 = 0.5;
  p.kappa2 = 1.0;
  p.kappa_a = 0.5;
  auto spec = reduced_model(p, dim);
  IQMeta m;
  m.T_m = 0.1;
  m.kappa_c = 0.5;
  DensityMatrix rho0 = DensityMatrix::pure(coherent(dim, 1.0));
  auto a = annihilation(dim);
  auto ens = sme_ensemble(spec, rho0, m, 10, {a, number(dim)}, 200, 2024);
  auto ev = evolve(spec, rho0, ens.times, {a, number(dim)});
  for (int o = 0; o < 2; ++o)
    for (std::size_t k = 0; k < ens.times.size(); ++k) {
      cplx d = ens.mean[o][k] - ev.values[o][k];
      cplx se = ens.stderr_[o][k];
      CHECK(std::abs(d.real()) <= 4.0 * se.real() + 1e-12);
      CHECK(std::abs(d.imag()) <= 4.0 * se.imag() + 1e-12);
    }
}
