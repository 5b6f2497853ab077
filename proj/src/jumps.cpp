#include "catsim/jumps.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/distributions/chi_squared.hpp>

#include "catsim/error.hpp"

namespace catsim {

namespace {

constexpr int kBins = 4096;

struct Histogram {
  std::vector<double> count, sum, sumsq;
};

Histogram bin(const std::vector<double>& x, double lo, double hi) {
  Histogram h;
  h.count.assign(kBins, 0.0);
  h.sum.assign(kBins, 0.0);
  h.sumsq.assign(kBins, 0.0);
  double w = (hi - lo) / kBins;
  for (double v : x) {
    int b = std::clamp(int((v - lo) / w), 0, kBins - 1);
    h.count[b] += 1.0;
    h.sum[b] += v;
    h.sumsq[b] += v * v;
  }
  return h;
}

// Otsu split on the histogram: maximizes the between-class variance.
int otsu(const Histogram& h) {
  double n = 0.0, s = 0.0;
  for (int b = 0; b < kBins; ++b) {
    n += h.count[b];
    s += h.sum[b];
  }
  double n0 = 0.0, s0 = 0.0, best = -1.0;
  int cut = kBins / 2;
  for (int b = 0; b < kBins - 1; ++b) {
    n0 += h.count[b];
    s0 += h.sum[b];
    double n1 = n - n0;
    if (n0 <= 0.0 || n1 <= 0.0) continue;
    double d = s0 / n0 - (s - s0) / n1;
    double v = n0 * n1 * d * d;
    if (v > best) {
      best = v;
      cut = b;
    }
  }
  return cut;
}

}  // namespace

TwoGaussianFit fit_two_gaussians(const std::vector<double>& x) {
  if (x.size() < 2) throw Error(ErrorKind::NotBimodal, "need at least two samples");
  auto [mn, mx] = std::minmax_element(x.begin(), x.end());
  double lo = *mn, hi = *mx;
  if (!std::isfinite(lo) || !std::isfinite(hi)) throw Error(ErrorKind::InvalidArgument, "non-finite samples");
  if (!(hi > lo)) throw Error(ErrorKind::NotBimodal, "constant record");
  Histogram h = bin(x, lo, hi);
  double sfloor = 1e-6 * (hi - lo);

  TwoGaussianFit f;
  int cut = otsu(h);
  for (int k = 0; k < 2; ++k) {
    double n = 0.0, s = 0.0, q = 0.0;
    for (int b = (k == 0 ? 0 : cut + 1); b <= (k == 0 ? cut : kBins - 1); ++b) {
      n += h.count[b];
      s += h.sum[b];
      q += h.sumsq[b];
    }
    f.weight[k] = n / double(x.size());
    f.mean[k] = s / n;
    f.sigma[k] = std::max(sfloor, std::sqrt(std::max(0.0, q / n - f.mean[k] * f.mean[k])));
  }

  std::vector<double> r(kBins);
  double prev = -std::numeric_limits<double>::infinity();
  const double total = double(x.size());
  for (f.iterations = 1; f.iterations <= 1000; ++f.iterations) {
    double ll = 0.0;
    for (int b = 0; b < kBins; ++b) {
      if (h.count[b] == 0.0) continue;
      double xb = h.sum[b] / h.count[b];
      double lp[2];
      for (int k = 0; k < 2; ++k) {
        double z = (xb - f.mean[k]) / f.sigma[k];
        lp[k] = std::log(std::max(f.weight[k], 1e-300)) - std::log(f.sigma[k]) - 0.5 * z * z;
      }
      double m = std::max(lp[0], lp[1]);
      double e0 = std::exp(lp[0] - m), e1 = std::exp(lp[1] - m);
      r[b] = e1 / (e0 + e1);
      ll += h.count[b] * (m + std::log(e0 + e1));
    }
    for (int k = 0; k < 2; ++k) {
      double W = 0.0, S = 0.0;
      for (int b = 0; b < kBins; ++b) {
        double rk = k == 1 ? r[b] : 1.0 - r[b];
        W += rk * h.count[b];
        S += rk * h.sum[b];
      }
      if (W <= 0.0) {
        f.weight[k] = 0.0;
        continue;
      }
      double mu = S / W, V = 0.0;
      for (int b = 0; b < kBins; ++b) {
        if (h.count[b] == 0.0) continue;
        double rk = k == 1 ? r[b] : 1.0 - r[b];
        V += rk * (h.sumsq[b] - 2.0 * mu * h.sum[b] + mu * mu * h.count[b]);
      }
      f.weight[k] = W / total;
      f.mean[k] = mu;
      f.sigma[k] = std::max(sfloor, std::sqrt(std::max(0.0, V / W)));
    }
    if (std::abs(ll - prev) <= 1e-12 * std::abs(ll) + 1e-12) break;
    prev = ll;
  }
  if (f.mean[0] > f.mean[1]) {
    std::swap(f.weight[0], f.weight[1]);
    std::swap(f.mean[0], f.mean[1]);
    std::swap(f.sigma[0], f.sigma[1]);
  }
  f.separation = std::sqrt(2.0) * (f.mean[1] - f.mean[0]) / std::hypot(f.sigma[0], f.sigma[1]);
  return f;
}

std::size_t DwellSet::uncensored_count() const { return std::size_t(std::count(censored.begin(), censored.end(), false)); }

DwellSet detect_jumps(const std::vector<double>& I, double T_m, const ThresholdPolicy& policy) {
  if (!(T_m > 0.0)) throw Error(ErrorKind::InvalidArgument, "T_m must be positive");
  if (!(policy.h >= 0.0)) throw Error(ErrorKind::InvalidArgument, "hysteresis width must be >= 0");
  TwoGaussianFit f = fit_two_gaussians(I);
  double n = double(I.size());
  if (f.separation <= policy.min_separation || f.weight[0] * n < 1.0 || f.weight[1] * n < 1.0)
    throw Error(ErrorKind::NotBimodal, "I histogram is not bimodal (separation " + std::to_string(f.separation) + ")");

  const double up = f.mean[1] - policy.h * f.sigma[1];
  const double down = f.mean[0] + policy.h * f.sigma[0];
  DwellSet d;
  d.T_m = T_m;
  d.record_samples = long(I.size());
  d.level_low = f.mean[0];
  d.level_high = f.mean[1];

  auto z0 = std::abs(I[0] - f.mean[0]) / f.sigma[0], z1 = std::abs(I[0] - f.mean[1]) / f.sigma[1];
  int state = z1 < z0 ? 1 : -1;
  long run = 0;
  for (double v : I) {
    int next = state;
    if (state < 0 && v >= up) next = 1;
    if (state > 0 && v <= down) next = -1;
    if (next != state) {
      d.samples.push_back(run);
      d.labels.push_back(state);
      state = next;
      run = 0;
    }
    ++run;
  }
  d.samples.push_back(run);
  d.labels.push_back(state);
  for (long s : d.samples) d.durations.push_back(double(s) * T_m);
  d.censored.assign(d.samples.size(), false);
  d.censored.front() = true;
  d.censored.back() = true;
  return d;
}

DwellSet detect_jumps(const IQSeries& s, const ThresholdPolicy& policy) { return detect_jumps(s.I, s.meta.T_m, policy); }

IQSeries square_wave(const DwellSet& d) {
  IQSeries s;
  s.meta.T_m = d.T_m;
  s.meta.generator = "square-wave";
  for (std::size_t k = 0; k < d.samples.size(); ++k)
    s.I.insert(s.I.end(), std::size_t(d.samples[k]), d.labels[k] > 0 ? d.level_high : d.level_low);
  s.Q.assign(s.I.size(), 0.0);
  return s;
}

double ks_pvalue(double D, std::size_t n) {
  if (n == 0) throw Error(ErrorKind::InvalidArgument, "KS test needs samples");
  double sn = std::sqrt(double(n));
  double lam = (sn + 0.12 + 0.11 / sn) * D;
  if (lam < 0.2) return 1.0;
  double sum = 0.0, sign = 1.0;
  for (int k = 1; k <= 100; ++k) {
    double t = sign * std::exp(-2.0 * k * k * lam * lam);
    sum += t;
    if (std::abs(t) < 1e-16 * std::abs(sum)) break;
    sign = -sign;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

DwellCdf dwell_cdf(const DwellSet& d) {
  DwellCdf c;
  for (std::size_t k = 0; k < d.durations.size(); ++k)
    if (!d.censored[k]) c.tau.push_back(d.durations[k]);
  if (c.tau.size() < 20)
    throw Error(ErrorKind::TooFewDwells, "need >= 20 uncensored dwells, have " + std::to_string(c.tau.size()));
  std::sort(c.tau.begin(), c.tau.end());
  double n = double(c.tau.size());
  c.mean = std::accumulate(c.tau.begin(), c.tau.end(), 0.0) / n;
  for (std::size_t i = 0; i < c.tau.size(); ++i) {
    c.F.push_back(double(i + 1) / n);
    double G = 1.0 - std::exp(-c.tau[i] / c.mean);
    c.ks_D = std::max({c.ks_D, c.F[i] - G, G - double(i) / n});
  }
  c.ks_p = ks_pvalue(c.ks_D, c.tau.size());
  return c;
}

BitflipEstimate bitflip_time(const DwellSet& d, const BitflipOptions& opt) {
  if (d.durations.empty() || d.record_samples == 0 || !(d.T_m > 0.0))
    throw Error(ErrorKind::TooFewDwells, "record has no dwells");
  if (!(opt.confidence > 0.0 && opt.confidence < 1.0))
    throw Error(ErrorKind::InvalidArgument, "confidence must lie in (0, 1)");
  BitflipEstimate e;
  double sum = 0.0, all = 0.0;
  for (std::size_t k = 0; k < d.durations.size(); ++k) {
    all += d.durations[k];
    if (opt.include_censored || !d.censored[k]) {
      sum += d.durations[k];
      ++e.n_dwells;
    }
  }
  if (e.n_dwells < 5) {
    // only a lower bound: the whole record spread over the observed flips
    e.lower_bound = true;
    e.T = all / double(std::max<std::size_t>(e.n_dwells, 1));
    e.lo = e.T;
    e.hi = std::numeric_limits<double>::infinity();
    return e;
  }
  double n = double(e.n_dwells);
  e.T = sum / n;
  boost::math::chi_squared chi(2.0 * n);
  double a = 1.0 - opt.confidence;
  e.lo = 2.0 * sum / boost::math::quantile(chi, 1.0 - a / 2.0);
  e.hi = 2.0 * sum / boost::math::quantile(chi, a / 2.0);
  return e;
}

DwellSet concatenate(const DwellSet& a, const DwellSet& b) {
  if (a.T_m != b.T_m) throw Error(ErrorKind::DimensionMismatch, "dwell sets have different T_m");
  DwellSet c = a;
  c.samples.insert(c.samples.end(), b.samples.begin(), b.samples.end());
  c.durations.insert(c.durations.end(), b.durations.begin(), b.durations.end());
  c.labels.insert(c.labels.end(), b.labels.begin(), b.labels.end());
  c.censored.insert(c.censored.end(), b.censored.begin(), b.censored.end());
  c.record_samples += b.record_samples;
  return c;
}

DecayEstimate bitflip_from_decay(const ModelSpec& spec, cplx alpha0, const DecayOptions& opt) {
  spec.validate();
  if (opt.samples < 4 || !(opt.window_start >= 0.0 && opt.window_start < 1.0) || !(opt.floor > 0.0))
    throw Error(ErrorKind::InvalidArgument, "bad decay-fit options");
  const Dims& dims = spec.dims();
  std::vector<StateVector> parts{coherent(dims[0], alpha0)};
  for (std::size_t m = 1; m < dims.size(); ++m) parts.push_back(fock(dims[m], 0));
  DensityMatrix rho0 = DensityMatrix::pure(tensor(parts));

  Liouvillian L = build_liouvillian(spec);
  GapResult gap = spectral_gap(L, Sector::Odd);
  DecayEstimate e;
  e.T_gap = 1.0 / gap.rate;
  double t_end = opt.t_end > 0.0 ? opt.t_end : 3.0 * e.T_gap;

  std::vector<double> times;
  for (int k = 1; k <= opt.samples; ++k) times.push_back(t_end * k / opt.samples);
  auto a = embed(annihilation(dims[0]), dims, 0);
  long sector = L.parity_compatible() ? total_dim(dims) * total_dim(dims) / 2 : total_dim(dims) * total_dim(dims);
  auto ev = sector <= 1600 ? evolve_propagator(L, rho0, times, {a}) : evolve(L, rho0, times, {a});

  double amin = opt.floor * std::abs(alpha0);
  std::vector<double> t, y;
  double last = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (times[k] < opt.window_start * t_end) continue;
    double v = std::abs(ev.values[0][k]);
    if (v <= amin) break;
    if (v > last * (1.0 + 1e-9)) throw Error(ErrorKind::DegenerateFit, "non-monotone <a>(t) in the fit window");
    last = v;
    t.push_back(times[k]);
    y.push_back(std::log(v));
  }
  if (t.size() < 3) throw Error(ErrorKind::DegenerateFit, "fewer than three usable points in the fit window");
  double n = double(t.size());
  double tm = std::accumulate(t.begin(), t.end(), 0.0) / n, ym = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t k = 0; k < t.size(); ++k) {
    sxy += (t[k] - tm) * (y[k] - ym);
    sxx += (t[k] - tm) * (t[k] - tm);
  }
  double slope = sxy / sxx;
  if (!(slope < 0.0)) throw Error(ErrorKind::DegenerateFit, "<a>(t) does not decay");
  e.T = -1.0 / slope;
  e.amplitude = std::exp(ym - slope * tm);
  e.rel_diff = std::abs(e.T / e.T_gap - 1.0);
  e.points = int(t.size());
  return e;
}

namespace {

struct Line {
  double a = 0.0, b = 0.0;
  bool ok = false;
};

Line fit_line(const std::vector<double>& x, const std::vector<double>& y, std::size_t n) {
  Line l;
  double xm = 0.0, ym = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    xm += x[k];
    ym += y[k];
  }
  xm /= double(n);
  ym /= double(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    sxx += (x[k] - xm) * (x[k] - xm);
    sxy += (x[k] - xm) * (y[k] - ym);
  }
  if (!(sxx > 0.0)) return l;
  l.b = sxy / sxx;
  l.a = ym - l.b * xm;
  l.ok = true;
  return l;
}

}  // namespace

ScalingFit scaling_fit(std::vector<ScalingPoint> pts) {
  if (pts.size() < 4) throw Error(ErrorKind::DegenerateFit, "scaling fit needs >= 4 points");
  for (const auto& p : pts)
    if (!std::isfinite(p.nbar) || !(p.T > 0.0) || !std::isfinite(p.T))
      throw Error(ErrorKind::InvalidArgument, "scaling points need finite nbar and positive finite T");
  std::sort(pts.begin(), pts.end(), [](const ScalingPoint& a, const ScalingPoint& b) {
    return a.nbar != b.nbar ? a.nbar < b.nbar : a.T < b.T;
  });
  const std::size_t N = pts.size();
  std::vector<double> x(N), y(N);
  for (std::size_t k = 0; k < N; ++k) {
    x[k] = pts[k].nbar;
    y[k] = std::log(pts[k].T);
  }
  double ym = std::accumulate(y.begin(), y.end(), 0.0) / double(N), vy = 0.0;
  for (double v : y) vy += (v - ym) * (v - ym);
  const double rss_floor = 1e-12 * std::max(vy, 1e-300);

  Line full = fit_line(x, y, N);
  if (!full.ok) throw Error(ErrorKind::DegenerateFit, "all points share one nbar");
  double rss = 0.0;
  for (std::size_t k = 0; k < N; ++k) rss += std::pow(y[k] - full.a - full.b * x[k], 2);
  auto bic = [&](double r, int p) { return double(N) * std::log(std::max(r, rss_floor) / double(N)) + p * std::log(double(N)); };

  ScalingFit best;
  best.factor = std::exp(full.b);
  best.T0 = std::exp(full.a);
  best.T_sat = std::numeric_limits<double>::infinity();
  best.breakpoint_nbar = x.back();
  best.rss = rss;
  double best_bic = bic(rss, 2);

  for (std::size_t k = 2; k < N; ++k) {
    Line l = fit_line(x, y, k);
    if (!l.ok || !(l.b > 0.0)) continue;
    double c = std::accumulate(y.begin() + long(k), y.end(), 0.0) / double(N - k);
    double r = 0.0;
    for (std::size_t j = 0; j < N; ++j) r += std::pow(y[j] - std::min(c, l.a + l.b * x[j]), 2);
    double b = bic(r, 3);
    if (b < best_bic) {
      best_bic = b;
      best.factor = std::exp(l.b);
      best.T0 = std::exp(l.a);
      best.T_sat = std::exp(c);
      best.saturated = true;
      best.breakpoint_nbar = (c - l.a) / l.b;
      best.rss = r;
    }
  }
  return best;
}

nlohmann::json jumps_report(const DwellSet& d, const BitflipEstimate& est, const DwellCdf* cdf) {
  nlohmann::json j;
  j["n_jumps"] = d.n_jumps();
  j["n_dwells"] = est.n_dwells;
  j["T_bf_s"] = est.T;
  j["CI"] = {est.lo, std::isfinite(est.hi) ? nlohmann::json(est.hi) : nlohmann::json(nullptr)};
  j["lower_bound"] = est.lower_bound;
  j["KS_p"] = cdf ? nlohmann::json(cdf->ks_p) : nlohmann::json(nullptr);
  j["censored_flags"] = d.censored;
  return j;
}

}  // namespace catsim
