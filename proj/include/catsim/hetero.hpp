#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "catsim/liouville.hpp"

namespace catsim {

struct IQMeta {
  double G = 1.0;  // gain
  double T_m = 1e-3;  // integration time per sample (s)
  double eta = 1.0;  // detection efficiency
  double kappa_c = 0.0;  // coupling rate to the detection line (rad/s)
  std::uint64_t seed = 0;
  std::string generator;

  void validate() const;
};

// Each sample is the record integrated over one T_m window, raw sqrt(G) scaling.
struct IQSeries {
  IQMeta meta;
  std::vector<double> I;
  std::vector<double> Q;

  std::size_t size() const { return I.size(); }
  double duration() const { return double(I.size()) * meta.T_m; }
};

// CSV with columns time,I,Q plus a JSON sidecar next to it (extension replaced by .json).
std::string sidecar_path(const std::string& csv_path);
void write_series(const std::string& csv_path, const IQSeries& s);
IQSeries read_series(const std::string& csv_path);

struct SmeOptions {
  double dt = 0.0;  // 0: min(1/(50 rate_scale), T_m/20)
  bool halving_check = false;
  double halving_tol = 0.05;  // max |<a>_dt - <a>_{dt/2}| over max(1, max|<a>|)
};

struct SmeDiagnostics {
  double dt = 0.0;
  int substeps = 0;
  double halving_error = -1.0;  // negative when not checked
};

// Diffusive heterodyne unraveling of the model. The memory-mode collapse
// operator proportional to a must carry a rate of at least meta.kappa_c.
IQSeries synth_sme(const ModelSpec& spec, const DensityMatrix& rho0, const IQMeta& meta, double duration,
                   std::uint64_t seed, const SmeOptions& opt = {}, SmeDiagnostics* diag = nullptr);
IQSeries synth_sme(const ModelSpec& spec, const IQMeta& meta, double duration, std::uint64_t seed,
                   const SmeOptions& opt = {});

struct EnsembleResult {
  std::vector<double> times;  // k * T_m, k = 0..n_samples
  std::vector<std::vector<cplx>> mean;  // [observable][time]
  std::vector<std::vector<cplx>> stderr_;  // componentwise standard error of the mean
  int trajectories = 0;
};

// Averages observables over independent conditional trajectories, one RNG stream each.
EnsembleResult sme_ensemble(const ModelSpec& spec, const DensityMatrix& rho0, const IQMeta& meta, int n_samples,
                            const std::vector<OperatorMatrix>& observables, int n_traj, std::uint64_t seed,
                            const SmeOptions& opt = {});

// Hidden +-1 state flipping at rate 1/T_bf; T_bf may be infinite.
IQSeries synth_telegraph(double nbar, double T_bf, const IQMeta& meta, double duration, std::uint64_t seed);

struct Moment {
  double mean = 0.0;
  double stderr_ = 0.0;
};

Moment iq_power(const IQSeries& s);
double vacuum_offset(const IQMeta& m);  // 2 G T_m
// iq_power minus the vacuum offset, i.e. 2 G kappa_c eta T_m^2 nbar in expectation.
Moment iq_power_excess(const IQSeries& s);
Moment iq_power_excess(const IQSeries& s, const IQSeries& vacuum_reference);

struct PhotonEstimate {
  double nbar = 0.0;
  double stderr_ = 0.0;
  bool clipped = false;  // numerator was negative and nbar was set to 0
};

PhotonEstimate photon_from_trace(const IQSeries& s, double G, double kappa_c, double eta);
double efficiency_from_coherent(const IQSeries& s, double nbar, double kappa_c, double T_m);

// Sums groups of k consecutive samples; T_m becomes k T_m.
IQSeries rebin(const IQSeries& s, int k);

// Records in units of <(a + a^dag)/2> and <(a - a^dag)/2i>; the input is untouched.
struct NormalizedView {
  std::vector<double> x;
  std::vector<double> p;
};
NormalizedView normalized(const IQSeries& s);

}  // namespace catsim
