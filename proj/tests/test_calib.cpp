#include <cmath>
#include <limits>

#include "catsim/calib.hpp"
#include "catsim/error.hpp"
#include "catsim/hetero.hpp"
#include "doctest.h"

using namespace catsim;

namespace {

const double ka = kTwoPi * 58e3, kb = kTwoPi * 16e6;

// Classical |alpha g2|^2 = |eps_d g2| - kappa_a kappa_b / 8 behind arbitrary gains.
CalibCurve semiclassical_curve(double g2, double drive_gain, double power_gain) {
  CalibCurve c;
  double xc = ka * kb / 8.0;
  for (int k = 1; k <= 40; ++k) {
    double x = 0.1 * k * xc;
    c.drive.push_back(x / g2 * drive_gain);
    c.power.push_back(std::max(0.0, x - xc) / (g2 * g2) * power_gain);
  }
  return c;
}

// Desk-scale quantum curve: kappa_a/kappa2 = 16.
struct DeskCurve {
  double kappa_a = 1.0, kappa_b = 100.0, g2 = 1.25;
  CalibCurve raw;
};

DeskCurve desk_curve() {
  DeskCurve d;
  std::vector<double> eps;
  double ec = critical_drive(d.g2, d.kappa_a, d.kappa_b);
  for (int k = 0; k <= 14; ++k) eps.push_back(ec * (0.5 + 0.25 * k));
  QuantumCurveOptions o;
  o.policy = TruncationPolicy::PoissonTail;
  o.min_dim = 60;
  o.check_kernel = false;
  auto q = quantum_vs_classical_curve(d.g2, d.kappa_a, d.kappa_b, eps, o);
  for (std::size_t k = 0; k < eps.size(); ++k) {
    d.raw.drive.push_back(0.37 * eps[k]);
    d.raw.power.push_back(2.2 * q.quantum[k]);
  }
  return d;
}

}  // namespace

TEST_CASE("rescaling recovers the generator axes") {
  const double g2 = kTwoPi * 39e3;
  auto c = semiclassical_curve(g2, 3.1e-5, 0.017);
  auto r = rescale_axes(c, ka, kb);
  for (std::size_t k = 0; k < c.drive.size(); ++k) {
    double x = c.drive[k] / 3.1e-5 * g2;
    CHECK(std::abs(r.x[k] / x - 1.0) < 1e-6);
    CHECK(std::abs(r.y[k] - c.power[k] / 0.017 * g2 * g2) < 1e-6 * x);
  }
  CHECK(r.tail_r2 > 0.999999);

  // tail slope and intercept after rescaling
  std::size_t n = r.x.size();
  double slope = (r.y[n - 1] - r.y[n - 3]) / (r.x[n - 1] - r.x[n - 3]);
  CHECK(std::abs(slope - 1.0) < 1e-6);
  CHECK(std::abs((r.x[n - 1] - r.y[n - 1]) / r.x_c - 1.0) < 1e-6);

  auto c2 = c;
  for (auto& p : c2.power) p *= 41.0;
  auto r2 = rescale_axes(c2, ka, kb);
  for (std::size_t k = 0; k < n; ++k) CHECK(r2.y[k] == doctest::Approx(r.y[k]).epsilon(1e-12));
}

TEST_CASE("rescaling rejects curves without a linear tail") {
  CalibCurve c;
  for (int k = 1; k <= 10; ++k) {
    c.drive.push_back(k);
    c.power.push_back(std::exp(double(k)));
  }
  try {
    rescale_axes(c, ka, kb);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DegenerateFit);
  }
  for (auto& p : c.power) p = -p;
  CHECK_THROWS_AS(rescale_axes(c, ka, kb), Error);

  CalibCurve bad;
  bad.drive = {1.0, 3.0, 2.0};
  bad.power = {0.0, 1.0, 2.0};
  CHECK_THROWS_AS(rescale_axes(bad, ka, kb), Error);
}

TEST_CASE("g2 round trip at desk scale") {
  auto d = desk_curve();
  auto rc = rescale_axes(d.raw, d.kappa_a, d.kappa_b);
  FitG2Options opt;
  opt.with_interval = true;
  auto f = fit_g2(rc, d.kappa_a, d.kappa_b, opt);
  CHECK(std::abs(f.g2 / d.g2 - 1.0) < 0.05);
  CHECK(f.truncation_change >= 0.0);
  CHECK(f.truncation_change < 1e-4);

  // well-shaped objective: worse at half and double g2 (r scales as 1/g2^2)
  CHECK(f.residual < fit_g2_objective(rc, 4.0 * f.r, opt));
  CHECK(f.residual < fit_g2_objective(rc, f.r / 4.0, opt));

  // any power gain is absorbed by the rescaling
  auto raw = d.raw;
  for (auto& p : raw.power) p *= 9.0;
  CHECK(fit_g2_objective(rescale_axes(raw, d.kappa_a, d.kappa_b), f.r, opt) ==
        doctest::Approx(f.residual).epsilon(1e-6));

  REQUIRE(f.corners.size() == 8);
  for (const auto& c : f.corners) {
    CHECK(c.g2 >= f.lo);
    CHECK(c.g2 <= f.hi);
  }

  // a genuine refit with other kappas lands on the corner formula
  FitG2Options o2 = opt;
  o2.with_interval = false;
  o2.check_truncation = false;
  double ka2 = 1.3 * d.kappa_a, kb2 = 0.8 * d.kappa_b;
  auto f2 = fit_g2(rescale_axes(d.raw, ka2, kb2), ka2, kb2, o2);
  CHECK(f2.g2 == doctest::Approx(g2_from_ratio(f.r, ka2, kb2)).epsilon(1e-3));

  auto j = fit_g2_report(f, d.kappa_a, d.kappa_b, opt);
  CHECK(j["g2_Hz"].get<double>() == doctest::Approx(f.g2 / kTwoPi));
  CHECK(j["interval"].size() == 2);
  CHECK(j.contains("settings"));
}

TEST_CASE("fit_g2 needs the critical region") {
  auto d = desk_curve();
  auto rc = rescale_axes(d.raw, d.kappa_a, d.kappa_b);
  RescaledCurve tail = rc;
  tail.x.clear();
  tail.y.clear();
  for (std::size_t k = 0; k < rc.x.size(); ++k)
    if (rc.x[k] > 1.2 * rc.x_c) {
      tail.x.push_back(rc.x[k]);
      tail.y.push_back(rc.y[k]);
    }
  CHECK_THROWS_AS(fit_g2(tail, d.kappa_a, d.kappa_b), Error);
}

TEST_CASE("kappa_b from the diamond edge slope") {
  CHECK(kb_from_edge_slope(-1.0, 3.0) == 3.0);
  CHECK_THROWS_AS(kb_from_edge_slope(0.0, 1.0), Error);
  CHECK_THROWS_AS(kb_from_edge_slope(0.5, 1.0), Error);

  TwoModeParams p;
  p.g2 = kTwoPi * 39e3;
  p.kappa_a = ka;
  p.kappa_b = kb;
  p.eps_d = kTwoPi * 12.1e6;
  double P = std::abs(p.eps_d * p.g2);
  auto m = nbar_map(p, symmetric_grid(1.3 * 4.0 * P / kb, 101), symmetric_grid(1.3 * 4.0 * P / ka, 101));
  double got = kb_from_edge_slope(edge_slope_from_map(m), ka);
  CHECK(std::abs(got / kb - 1.0) < 0.02);
  CHECK(got / kTwoPi >= 13e6);
  CHECK(got / kTwoPi <= 20e6);
}

TEST_CASE("excess loss") {
  CHECK(excess_loss(kTwoPi * 18e3, kTwoPi * 370.0, 0.0) == kTwoPi * 18e3);
  double extra = excess_loss(0.0, kTwoPi * 370.0, 20.0);
  CHECK(extra == doctest::Approx(kTwoPi * 14.8e3).epsilon(1e-12));
  const double g2 = kTwoPi * 39e3, k2 = 4.0 * g2 * g2 / kb;
  for (double n : {0.0, 3.0, 28.0, 43.0}) {
    CHECK(std::abs(excess_loss(kTwoPi * 18e3, k2, n) - excess_loss_g2(kTwoPi * 18e3, g2, kb, n)) <
          1e-12 * excess_loss(kTwoPi * 18e3, k2, n));
    CHECK(excess_loss(0.0, k2, n + 1.0) - excess_loss(0.0, k2, n) == doctest::Approx(2.0 * k2));
  }
  CHECK_THROWS_AS(excess_loss(-1.0, 1.0, 1.0), Error);
}

TEST_CASE("efficiency rig reduces to a driven cavity") {
  EfficiencyRigSpec rig;
  rig.chi = 1e-3;
  rig.omega_a = {0.0, kTwoPi * 30e3};
  rig.delta_q = {-kTwoPi * 1e6, 0.0, kTwoPi * 2e6};
  rig.mem_dim = 30;
  auto s = qubit_numbersplit(rig);
  for (int j = 0; j < 3; ++j) CHECK(std::abs(s.a(0, j)) < 1e-12);

  rig.chi = 0.0;
  CHECK_THROWS_AS(rig.validate(), Error);
  // chi enters only through the dispersive term: compare at chi = 0 directly
  auto spec = rig_model(EfficiencyRigSpec{rig.T1, rig.T2, 1.0, rig.kappa_c, rig.kappa_i, {}, 0.0, {}, 30, 2},
                        kTwoPi * 30e3, 0.0, 30);
  spec.H = spec.H + embed(number(30), spec.dims(), 0) * embed(number(2), spec.dims(), 1);
  SteadyStateOptions so;
  so.check_kernel = false;
  auto rho = steady_state(build_liouvillian(spec), so);
  cplx want = cplx(0.0, -2.0) * kTwoPi * 30e3 / rig.kappa_a();
  CHECK(std::abs(expect(embed(annihilation(30), spec.dims(), 0), rho) - want) < 1e-8);

  EfficiencyRigSpec bad;
  bad.T2 = 3.0 * bad.T1;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("number splitting and the efficiency round trip") {
  EfficiencyRigSpec rig;
  const double nbar = 1.5;
  rig.omega_a = {0.5 * rig.kappa_a() * std::sqrt(nbar / 2.0), 0.5 * rig.kappa_a() * std::sqrt(nbar)};
  rig.omega_q = kTwoPi * 15e3;
  const double step = rig.chi / 25.0;
  for (int k = -10; k <= 90; ++k) rig.delta_q.push_back(k * step);
  auto s = qubit_numbersplit(rig);

  auto peaks = numbersplit_peaks(s, 1, 1e-3);
  REQUIRE(peaks.size() >= 3);
  for (std::size_t k = 0; k < peaks.size(); ++k) CHECK(std::abs(peaks[k] - double(k) * rig.chi) <= step);
  CHECK(std::abs((peaks[2] - peaks[0]) / 2.0 / kTwoPi - 1.75e6) <= step / kTwoPi);

  // emulated spectroscopy S_t = A <a> with an unknown drive scale
  const double c_true = 2.7e3;
  const cplx A_true = std::polar(4.0, 0.3);
  RigData data;
  data.delta_q = rig.delta_q;
  data.s_in = {rig.omega_a[0] / c_true, rig.omega_a[1] / c_true};
  data.s_t = A_true * s.a;
  auto fit = fit_rig(rig, data, 0.3, 6.0);
  CHECK(std::abs(fit.drive_scale / c_true - 1.0) < 0.02);
  CHECK(std::abs(fit.A / A_true - 1.0) < 0.02);
  CHECK(std::abs(fit.nbar[1] / nbar - 1.0) < 0.04);
  CHECK(std::abs(fit.nbar[0] / (nbar / 2.0) - 1.0) < 0.04);

  // heterodyne records of the calibrated coherent state give back the programmed efficiency
  for (double eta : {0.03, 0.07}) {
    IQMeta m;
    m.G = 5.0;
    m.T_m = 1e-4;
    m.eta = eta;
    m.kappa_c = rig.kappa_c;
    auto rec = synth_telegraph(nbar, std::numeric_limits<double>::infinity(), m, 10.0, 61);
    double got = efficiency_from_coherent(rec, fit.nbar[1], m.kappa_c, m.T_m);
    CHECK(std::abs(got / eta - 1.0) < 0.10);
  }
}
