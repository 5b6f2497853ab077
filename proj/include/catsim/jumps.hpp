#pragma once

#include <vector>

#include "catsim/hetero.hpp"
#include "json.hpp"

namespace catsim {

struct ThresholdPolicy {
  double h = 0.5;  // hysteresis half-width in units of each mode's sigma
  double min_separation = 2.0;  // Ashman's D required to call the histogram bimodal
};

// Component 0 has the lower mean.
struct TwoGaussianFit {
  double weight[2] = {0.5, 0.5};
  double mean[2] = {0.0, 0.0};
  double sigma[2] = {1.0, 1.0};
  double separation = 0.0;  // Ashman's D
  int iterations = 0;
};

TwoGaussianFit fit_two_gaussians(const std::vector<double>& x);

struct DwellSet {
  std::vector<long> samples;  // dwell lengths in samples
  std::vector<double> durations;  // samples * T_m
  std::vector<int> labels;  // +1 upper state, -1 lower state
  std::vector<bool> censored;  // first and last dwell of the record
  double T_m = 0.0;
  long record_samples = 0;
  double level_low = -1.0, level_high = 1.0;

  std::size_t uncensored_count() const;
  int n_jumps() const { return durations.empty() ? 0 : int(durations.size()) - 1; }
};

DwellSet detect_jumps(const IQSeries& s, const ThresholdPolicy& policy = {});
DwellSet detect_jumps(const std::vector<double>& I, double T_m, const ThresholdPolicy& policy = {});

// Noiseless square wave at the detected mode centers.
IQSeries square_wave(const DwellSet& d);

// Two-sided Kolmogorov-Smirnov tail probability for statistic D at sample size n.
double ks_pvalue(double D, std::size_t n);

struct DwellCdf {
  std::vector<double> tau;  // sorted dwell durations
  std::vector<double> F;  // empirical CDF, i/n
  double mean = 0.0;
  double ks_D = 0.0;
  double ks_p = 0.0;
};

// Requires >= 20 uncensored dwells; KS test against Exponential(sample mean).
DwellCdf dwell_cdf(const DwellSet& d);

struct BitflipOptions {
  double confidence = 0.95;
  bool include_censored = false;
};

struct BitflipEstimate {
  double T = 0.0;
  double lo = 0.0, hi = 0.0;  // exponential-mean chi-square interval
  std::size_t n_dwells = 0;
  bool lower_bound = false;  // fewer than 5 uncensored dwells: T is only a lower bound
};

BitflipEstimate bitflip_time(const DwellSet& d, const BitflipOptions& opt = {});

DwellSet concatenate(const DwellSet& a, const DwellSet& b);

struct DecayOptions {
  double t_end = 0.0;  // 0: three times the odd-sector relaxation time
  int samples = 240;
  double window_start = 1.0 / 3.0;  // fraction of t_end where the fit window opens
  double floor = 1e-3;  // samples with |<a>| below floor*|alpha0| are dropped
};

struct DecayEstimate {
  double T = 0.0;
  double amplitude = 0.0;
  double T_gap = 0.0;  // 1 / spectral gap of the odd sector
  double rel_diff = 0.0;  // |T/T_gap - 1|
  int points = 0;
};

// Evolves |alpha0> (other modes in vacuum), fits |<a>(t)| = A exp(-t/T) over the late window.
DecayEstimate bitflip_from_decay(const ModelSpec& spec, cplx alpha0, const DecayOptions& opt = {});

struct ScalingPoint {
  double nbar;
  double T;
};

struct ScalingFit {
  double factor = 0.0;  // per photon
  double T0 = 0.0;
  double T_sat = 0.0;  // +inf when unbounded
  bool saturated = false;
  double breakpoint_nbar = 0.0;  // where T0 factor^n meets T_sat, or the last nbar
  double rss = 0.0;  // log-space residual sum of squares
};

// T = min(T_sat, T0 factor^nbar), least squares in log space with a breakpoint search.
ScalingFit scaling_fit(std::vector<ScalingPoint> points);

nlohmann::json jumps_report(const DwellSet& d, const BitflipEstimate& est, const DwellCdf* cdf);

}  // namespace catsim
