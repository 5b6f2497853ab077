#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "catsim/error.hpp"
#include "catsim/jumps.hpp"
#include "catsim/models.hpp"
#include "catsim/rng.hpp"
#include "doctest.h"

using namespace catsim;

namespace {

IQMeta lab_meta() {
  IQMeta m;
  m.G = 3.0;
  m.T_m = 1e-3;
  m.eta = 0.07;
  m.kappa_c = kTwoPi * 40e3;
  return m;
}

// nbar giving a per-sample SNR (center over noise sigma) of `snr`
double nbar_for_snr(const IQMeta& m, double snr) { return snr * snr / (2.0 * m.kappa_c * m.eta * m.T_m); }

}  // namespace

TEST_CASE("noiseless square wave") {
  std::vector<double> I;
  const int half[] = {30, 50, 50, 50, 50, 20};
  for (int k = 0; k < 6; ++k) I.insert(I.end(), half[k], k % 2 ? -1.0 : 1.0);
  auto d = detect_jumps(I, 1e-3);
  REQUIRE(d.samples.size() == 6);
  for (int k = 0; k < 6; ++k) {
    CHECK(d.samples[k] == half[k]);
    CHECK(d.durations[k] == half[k] * 1e-3);
    CHECK(d.labels[k] == (k % 2 ? -1 : 1));
  }
  CHECK(d.censored.front());
  CHECK(d.censored.back());
  CHECK(d.uncensored_count() == 4);
  CHECK(d.n_jumps() == 5);
}

TEST_CASE("pure noise is not bimodal") {
  CounterRng rng(4);
  std::vector<double> I(20000);
  for (auto& v : I) v = rng.normal();
  try {
    detect_jumps(I, 1e-3);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NotBimodal);
  }
  CHECK_THROWS_AS(detect_jumps(std::vector<double>(100, 1.0), 1e-3), Error);
}

TEST_CASE("two-Gaussian fit recovers a known mixture") {
  CounterRng rng(8);
  std::vector<double> x;
  for (int k = 0; k < 30000; ++k) x.push_back(k % 3 ? 2.0 + 0.5 * rng.normal() : -1.0 + 0.3 * rng.normal());
  auto f = fit_two_gaussians(x);
  CHECK(f.mean[0] == doctest::Approx(-1.0).epsilon(0.02));
  CHECK(f.mean[1] == doctest::Approx(2.0).epsilon(0.01));
  CHECK(f.sigma[0] == doctest::Approx(0.3).epsilon(0.03));
  CHECK(f.sigma[1] == doctest::Approx(0.5).epsilon(0.03));
  CHECK(f.weight[1] == doctest::Approx(2.0 / 3.0).epsilon(0.02));
  CHECK(f.separation > 2.0);
}

TEST_CASE("telegraph dwells at SNR 3") {
  IQMeta m = lab_meta();
  auto s = synth_telegraph(nbar_for_snr(m, 3.0), 0.3, m, 300.0, 12);
  auto d = detect_jumps(s);
  auto e = bitflip_time(d);
  CHECK(std::abs(e.T / 0.3 - 1.0) < 0.10);
  CHECK(e.lo < e.T);
  CHECK(e.hi > e.T);
  CHECK_FALSE(e.lower_bound);

  long total = std::accumulate(d.samples.begin(), d.samples.end(), 0L);
  CHECK(total == d.record_samples);
  double sum = std::accumulate(d.durations.begin(), d.durations.end(), 0.0);
  CHECK(std::abs(sum - s.duration()) <= m.T_m);
}

TEST_CASE("detection is idempotent") {
  IQMeta m = lab_meta();
  auto s = synth_telegraph(28.0, 0.3, m, 100.0, 13);
  auto d = detect_jumps(s);
  auto d2 = detect_jumps(square_wave(d));
  CHECK(d2.samples == d.samples);
  CHECK(d2.labels == d.labels);
  CHECK(d2.censored == d.censored);
}

TEST_CASE("dwell CDF and exponentiality") {
  IQMeta m = lab_meta();
  int pass = 0;
  for (int seed = 0; seed < 20; ++seed) {
    auto d = detect_jumps(synth_telegraph(28.0, 0.3, m, 100.0, 100 + seed));
    auto c = dwell_cdf(d);
    if (c.ks_p > 0.01) ++pass;
    if (seed == 0) {
      CHECK(std::is_sorted(c.F.begin(), c.F.end()));
      CHECK(c.F.front() > 0.0);
      CHECK(c.F.back() == 1.0);
      CHECK(std::is_sorted(c.tau.begin(), c.tau.end()));
    }
  }
  CHECK(pass >= 19);

  std::vector<double> I;
  for (int k = 0; k < 42; ++k) I.insert(I.end(), 40, k % 2 ? -1.0 : 1.0);
  auto eq = dwell_cdf(detect_jumps(I, 1e-3));
  CHECK(eq.ks_p < 0.01);

  std::vector<double> few;
  for (int k = 0; k < 10; ++k) few.insert(few.end(), 40, k % 2 ? -1.0 : 1.0);
  CHECK_THROWS_AS(dwell_cdf(detect_jumps(few, 1e-3)), Error);
}

TEST_CASE("KS tail probability") {
  // Kolmogorov distribution: P(sqrt(n) D > 1.3581) = 0.05 asymptotically
  CHECK(ks_pvalue(1.3581 / std::sqrt(1e6), 1000000) == doctest::Approx(0.05).epsilon(0.01));
  CHECK(ks_pvalue(1.6276 / std::sqrt(1e6), 1000000) == doctest::Approx(0.01).epsilon(0.01));
  CHECK(ks_pvalue(0.0, 10) == 1.0);
}

TEST_CASE("bit-flip time estimator") {
  DwellSet one;
  one.T_m = 1e-3;
  one.record_samples = 5000;
  one.samples = {5000};
  one.durations = {5.0};
  one.labels = {1};
  one.censored = {true};
  auto e = bitflip_time(one);
  CHECK(e.lower_bound);
  CHECK(e.T == 5.0);
  CHECK(e.lo == 5.0);

  DwellSet empty;
  CHECK_THROWS_AS(bitflip_time(empty), Error);

  IQMeta m = lab_meta();
  auto a = detect_jumps(synth_telegraph(28.0, 0.3, m, 200.0, 51));
  auto b = detect_jumps(synth_telegraph(28.0, 0.3, m, 200.0, 52));
  auto ea = bitflip_time(a), eb = bitflip_time(b);
  auto ec = bitflip_time(concatenate(a, b));
  CHECK(std::abs(ea.T / 0.3 - 1.0) < 0.10);
  CHECK(ec.T >= std::min(ea.lo, eb.lo));
  CHECK(ec.T <= std::max(ea.hi, eb.hi));
  CHECK(ec.n_dwells == ea.n_dwells + eb.n_dwells);
  CHECK(ec.hi - ec.lo < ea.hi - ea.lo);

  // chi-square interval for n dwells of an exponential mean
  BitflipOptions all;
  all.include_censored = true;
  CHECK(bitflip_time(a, all).n_dwells == a.durations.size());

  auto c = dwell_cdf(a);
  auto j = jumps_report(a, ea, &c);
  CHECK(j["n_jumps"].get<int>() == a.n_jumps());
  CHECK(j["T_bf_s"].get<double>() == ea.T);
  CHECK(j["CI"].size() == 2);
  CHECK(j["KS_p"].get<double>() == c.ks_p);
  CHECK(j["censored_flags"].size() == a.censored.size());
  CHECK(jumps_report(one, e, nullptr)["KS_p"].is_null());
}

TEST_CASE("bit-flip time from the decay of <a>") {
  SUBCASE("damped cavity") {
    ReducedParams p;
    p.kappa_a = 0.8;
    auto e = bitflip_from_decay(reduced_model(p, 12), 1.0);
    CHECK(e.T == doctest::Approx(2.0 / 0.8).epsilon(1e-6));
    CHECK(e.rel_diff < 1e-6);
  }
  SUBCASE("pointer states at nbar 4") {
    ReducedParams p;
    p.kappa2 = 1.0;
    p.kappa_a = 1.0;
    p.eps2 = 2.0 + 0.25;
    auto e = bitflip_from_decay(reduced_model(p, 24), 2.0);
    CHECK(e.rel_diff < 0.05);
    CHECK(e.T > 100.0);
  }
}

TEST_CASE("scaling fit") {
  const double f = 1.4, Tsat = 127.0, T0 = Tsat / std::pow(f, 20.0);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    CounterRng rng(seed);
    std::vector<ScalingPoint> pts;
    for (int n = 2; n <= 30; n += 2) pts.push_back({double(n), std::min(Tsat, T0 * std::pow(f, n)) * std::exp(0.2 * rng.normal())});
    auto fit = scaling_fit(pts);
    CHECK(fit.saturated);
    CHECK(fit.factor >= 1.3);
    CHECK(fit.factor <= 1.5);
    CHECK(fit.T_sat >= 100.0);
    CHECK(fit.T_sat <= 160.0);

    std::vector<ScalingPoint> shuffled(pts.rbegin(), pts.rend());
    std::swap(shuffled[2], shuffled[9]);
    auto g = scaling_fit(shuffled);
    CHECK(g.factor == fit.factor);
    CHECK(g.T_sat == fit.T_sat);
  }

  std::vector<ScalingPoint> pure;
  for (int n = 1; n <= 8; ++n) pure.push_back({double(n), 0.01 * std::pow(1.4, n)});
  auto u = scaling_fit(pure);
  CHECK_FALSE(u.saturated);
  CHECK(std::isinf(u.T_sat));
  CHECK(u.breakpoint_nbar == 8.0);
  CHECK(u.factor == doctest::Approx(1.4).epsilon(1e-12));

  CHECK_THROWS_AS(scaling_fit({{1, 1}, {2, 2}, {3, 3}}), Error);
  CHECK_THROWS_AS(scaling_fit({{1, 1}, {1, 2}, {1, 3}, {1, 4}}), Error);
}
