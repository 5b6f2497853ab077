#include "catsim/hetero.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "json.hpp"

#include "catsim/error.hpp"
#include "catsim/parallel.hpp"
#include "catsim/rng.hpp"

namespace catsim {

void IQMeta::validate() const {
  if (!(G > 0.0) || !std::isfinite(G)) throw Error(ErrorKind::InvalidArgument, "gain G must be positive");
  if (!(T_m > 0.0) || !std::isfinite(T_m)) throw Error(ErrorKind::InvalidArgument, "T_m must be positive");
  if (!(eta >= 0.0 && eta <= 1.0)) throw Error(ErrorKind::InvalidArgument, "efficiency must lie in [0, 1]");
  if (!(kappa_c >= 0.0) || !std::isfinite(kappa_c))
    throw Error(ErrorKind::InvalidArgument, "kappa_c must be non-negative");
}

namespace {

long sample_count(double duration, double T_m) {
  if (!(duration > 0.0)) throw Error(ErrorKind::InvalidArgument, "duration must be positive");
  double n = std::round(duration / T_m);
  if (n < 1.0) throw Error(ErrorKind::InvalidArgument, "duration shorter than one integration window");
  if (n > 1e9) throw Error(ErrorKind::InvalidArgument, "too many samples");
  return long(n);
}

// Nonzeros of a sparse operator; products are formed as X S^dag with
// contiguous column updates, which beats generic sparse-dense kernels at these sizes.
struct Triplets {
  std::vector<int> row, col;
  std::vector<cplx> val;

  Triplets() = default;
  explicit Triplets(const SparseMat& S) {
    for (int j = 0; j < S.outerSize(); ++j)
      for (SparseMat::InnerIterator it(S, j); it; ++it) {
        if (it.value() == cplx(0.0, 0.0)) continue;
        row.push_back(int(it.row()));
        col.push_back(int(it.col()));
        val.push_back(it.value());
      }
  }

  // R += scale * X * S^dag
  void add_times_adjoint(DenseMat& R, const DenseMat& X, cplx scale) const {
    const long n = X.rows();
    for (std::size_t k = 0; k < val.size(); ++k) {
      cplx f = scale * std::conj(val[k]);
      const double fr = f.real(), fi = f.imag();
      // plain real arithmetic: std::complex products go through the NaN-safe slow path
      double* r = reinterpret_cast<double*>(R.col(row[k]).data());
      const double* x = reinterpret_cast<const double*>(X.col(col[k]).data());
      for (long i = 0; i < 2 * n; i += 2) {
        r[i] += fr * x[i] - fi * x[i + 1];
        r[i + 1] += fr * x[i + 1] + fi * x[i];
      }
    }
  }

  // Tr(S rho)
  cplx trace_with(const DenseMat& rho) const {
    cplx t(0.0, 0.0);
    for (std::size_t k = 0; k < val.size(); ++k) t += val[k] * rho(col[k], row[k]);
    return t;
  }
};

// One Kraus-form step of the heterodyne SME:
// M = 1 - (iH + sum L^dag L/2) dt + sum_k m_k dY_k,
// rho' ~ M rho M^dag + sum_j J_j rho J_j^dag dt, where m_k = sqrt(eta) c_k and
// J_j are the collapse channels with the monitored part removed.
// With m_I = h a and m_Q = -i h a the monitored term is h (dY_I - i dY_Q) a.
struct Unraveling {
  Triplets A, a;
  std::vector<Triplets> jumps;
  double dt = 0.0;
  double h = 0.0;
  bool monitored = false;

  Unraveling(const ModelSpec& spec, const IQMeta& meta, double dt_) : dt(dt_) {
    const Dims& dims = spec.dims();
    long n = total_dim(dims);
    SparseMat S(n, n);
    for (const auto& L : spec.collapse_ops) S += SparseMat(L.data().adjoint()) * L.data();
    SparseMat Id(n, n);
    Id.setIdentity();
    const cplx I1(0.0, 1.0);
    SparseMat Am = Id - (I1 * spec.H.data() + 0.5 * S) * dt;
    A = Triplets(Am);
    SparseMat am = embed(annihilation(dims[0]), dims, 0).data();
    a = Triplets(am);

    double rate = meta.eta * meta.kappa_c;
    monitored = rate > 0.0;
    int mon = -1;
    cplx s_mon(0.0, 0.0);
    if (monitored) {
      double aa = am.squaredNorm();
      for (std::size_t k = 0; k < spec.collapse_ops.size(); ++k) {
        const SparseMat& L = spec.collapse_ops[k].data();
        cplx s = SparseMat(SparseMat(am.adjoint()) * L).diagonal().sum() / aa;
        if (SparseMat(L - s * am).norm() > 1e-10 * L.norm()) continue;
        if (mon < 0 || std::abs(s) > std::abs(s_mon)) {
          mon = int(k);
          s_mon = s;
        }
      }
      if (mon < 0 || std::norm(s_mon) < meta.kappa_c * (1.0 - 1e-9))
        throw Error(ErrorKind::InvalidArgument,
                    "model needs a memory loss channel sqrt(k) a with k >= kappa_c for heterodyne monitoring");
      h = std::sqrt(rate / 2.0);
    }
    for (std::size_t k = 0; k < spec.collapse_ops.size(); ++k) {
      if (int(k) != mon) {
        jumps.emplace_back(SparseMat(spec.collapse_ops[k].data() * std::sqrt(dt)));
        continue;
      }
      double rest = std::norm(s_mon) - rate;
      if (rest > 0.0) jumps.emplace_back(SparseMat(am * std::sqrt(rest * dt)));
    }
  }

  cplx mean_a(const DenseMat& rho) const { return a.trace_with(rho); }

  // Advances a Hermitian rho by dt with Wiener increments dWI, dWQ; returns the record increments.
  void step(DenseMat& rho, double dWI, double dWQ, double& yI, double& yQ, DenseMat& X, DenseMat& W) const {
    const long n = rho.rows();
    cplx c(0.0, 0.0);
    if (monitored) {
      cplx ta = mean_a(rho);
      yI = 2.0 * h * ta.real() * dt + dWI;
      yQ = 2.0 * h * ta.imag() * dt + dWQ;
      c = h * cplx(yI, -yQ);
    } else {
      yI = dWI;
      yQ = dWQ;
    }
    // X = M rho = (rho M^dag)^dag
    W.setZero(n, n);
    A.add_times_adjoint(W, rho, 1.0);
    if (monitored) a.add_times_adjoint(W, rho, std::conj(c));
    X = W.adjoint();
    DenseMat next = DenseMat::Zero(n, n);
    A.add_times_adjoint(next, X, 1.0);
    if (monitored) a.add_times_adjoint(next, X, std::conj(c));
    // J rho J^dag = (rho J^dag)^dag J^dag
    for (const auto& J : jumps) {
      W.setZero(n, n);
      J.add_times_adjoint(W, rho, 1.0);
      X = W.adjoint();
      J.add_times_adjoint(next, X, 1.0);
    }
    double tr = next.trace().real();
    if (!(tr > 0.0) || !std::isfinite(tr)) throw Error(ErrorKind::Stiffness, "SME step lost positivity of the trace");
    rho = (next + next.adjoint()) * (0.5 / tr);
  }
};

double auto_dt(const ModelSpec& spec, const IQMeta& meta, const SmeOptions& opt) {
  if (opt.dt > 0.0) return std::min(opt.dt, meta.T_m);
  return std::min(1.0 / (50.0 * rate_scale(spec)), meta.T_m / 20.0);
}

// Runs one trajectory. Every substep draws four normals so that the halved
// integrator (`fine`) sees the same Wiener path split into halves.
template <class Observe>
void run_trajectory(const Unraveling& U, DenseMat rho, const IQMeta& meta, long n_samples, int n_sub, bool fine,
                    CounterRng& rng, std::vector<double>* I, std::vector<double>* Q, Observe&& observe) {
  double h = std::sqrt(fine ? U.dt : U.dt / 2.0);  // U.dt is the half step when fine
  double sg = std::sqrt(meta.G);
  DenseMat M, tmp;
  observe(0L, rho);
  for (long k = 0; k < n_samples; ++k) {
    double si = 0.0, sq = 0.0, yI = 0.0, yQ = 0.0;
    for (int s = 0; s < n_sub; ++s) {
      double i1 = h * rng.normal(), i2 = h * rng.normal();
      double q1 = h * rng.normal(), q2 = h * rng.normal();
      if (fine) {
        U.step(rho, i1, q1, yI, yQ, M, tmp);
        si += yI;
        sq += yQ;
        U.step(rho, i2, q2, yI, yQ, M, tmp);
      } else {
        U.step(rho, i1 + i2, q1 + q2, yI, yQ, M, tmp);
      }
      si += yI;
      sq += yQ;
    }
    if (I) (*I)[k] = sg * si;
    if (Q) (*Q)[k] = sg * sq;
    observe(k + 1, rho);
  }
}

void check_state(const ModelSpec& spec, const DensityMatrix& rho0) {
  spec.validate();
  if (rho0.dims() != spec.dims()) throw Error(ErrorKind::DimensionMismatch, "initial state dims differ from model");
}

DensityMatrix vacuum(const Dims& dims) {
  std::vector<StateVector> parts;
  for (int d : dims) parts.push_back(fock(d, 0));
  return DensityMatrix::pure(tensor(parts));
}

}  // namespace

IQSeries synth_sme(const ModelSpec& spec, const DensityMatrix& rho0, const IQMeta& meta_in, double duration,
                   std::uint64_t seed, const SmeOptions& opt, SmeDiagnostics* diag) {
  meta_in.validate();
  check_state(spec, rho0);
  IQMeta meta = meta_in;
  meta.seed = seed;
  meta.generator = "sme";
  long n = sample_count(duration, meta.T_m);
  double dt_max = auto_dt(spec, meta, opt);
  int n_sub = int(std::ceil(meta.T_m / dt_max - 1e-12));
  double dt = meta.T_m / n_sub;

  IQSeries out;
  out.meta = meta;
  out.I.resize(n);
  out.Q.resize(n);
  std::vector<cplx> coarse_a;
  Unraveling U(spec, meta, dt);
  CounterRng rng(seed, 0);
  run_trajectory(U, rho0.data(), meta, n, n_sub, false, rng, &out.I, &out.Q, [&](long, const DenseMat& r) {
    if (opt.halving_check) coarse_a.push_back(U.mean_a(r));
  });

  double herr = -1.0;
  if (opt.halving_check) {
    Unraveling Uf(spec, meta, dt / 2.0);
    CounterRng rng2(seed, 0);
    double diff = 0.0, scale = 1.0;
    run_trajectory(Uf, rho0.data(), meta, n, n_sub, true, rng2, nullptr, nullptr, [&](long k, const DenseMat& r) {
      cplx v = Uf.mean_a(r);
      diff = std::max(diff, std::abs(v - coarse_a[k]));
      scale = std::max(scale, std::abs(v));
    });
    herr = diff / scale;
    if (herr > opt.halving_tol)
      throw Error(ErrorKind::NonConvergence,
                  "SME result changes by " + std::to_string(herr) + " when the step is halved");
  }
  if (diag) *diag = {dt, n_sub, herr};
  return out;
}

IQSeries synth_sme(const ModelSpec& spec, const IQMeta& meta, double duration, std::uint64_t seed,
                   const SmeOptions& opt) {
  return synth_sme(spec, vacuum(spec.dims()), meta, duration, seed, opt);
}

EnsembleResult sme_ensemble(const ModelSpec& spec, const DensityMatrix& rho0, const IQMeta& meta, int n_samples,
                            const std::vector<OperatorMatrix>& observables, int n_traj, std::uint64_t seed,
                            const SmeOptions& opt) {
  meta.validate();
  check_state(spec, rho0);
  if (n_samples < 1 || n_traj < 2) throw Error(ErrorKind::InvalidArgument, "need >= 1 sample and >= 2 trajectories");
  for (const auto& o : observables)
    if (o.dims() != spec.dims()) throw Error(ErrorKind::DimensionMismatch, "observable dims differ from model");
  double dt_max = auto_dt(spec, meta, opt);
  int n_sub = int(std::ceil(meta.T_m / dt_max - 1e-12));
  Unraveling U(spec, meta, meta.T_m / n_sub);
  std::vector<Triplets> obs;
  for (const auto& o : observables) obs.emplace_back(o.data());
  const std::size_t nt = std::size_t(n_samples) + 1, no = obs.size();

  std::vector<std::vector<cplx>> per(n_traj, std::vector<cplx>(no * nt));
  parallel_for(n_traj, [&](int j) {
    CounterRng rng(seed, std::uint64_t(j));
    auto& v = per[j];
    run_trajectory(U, rho0.data(), meta, n_samples, n_sub, false, rng, nullptr, nullptr,
                   [&](long k, const DenseMat& r) {
                     for (std::size_t o = 0; o < no; ++o) v[o * nt + k] = obs[o].trace_with(r);
                   });
  });

  EnsembleResult res;
  res.trajectories = n_traj;
  for (std::size_t k = 0; k < nt; ++k) res.times.push_back(double(k) * meta.T_m);
  res.mean.assign(no, std::vector<cplx>(nt));
  res.stderr_.assign(no, std::vector<cplx>(nt));
  for (std::size_t o = 0; o < no; ++o)
    for (std::size_t k = 0; k < nt; ++k) {
      cplx m(0.0, 0.0);
      for (int j = 0; j < n_traj; ++j) m += per[j][o * nt + k];
      m /= double(n_traj);
      double vr = 0.0, vi = 0.0;
      for (int j = 0; j < n_traj; ++j) {
        cplx d = per[j][o * nt + k] - m;
        vr += d.real() * d.real();
        vi += d.imag() * d.imag();
      }
      double den = double(n_traj) * double(n_traj - 1);
      res.mean[o][k] = m;
      res.stderr_[o][k] = cplx(std::sqrt(vr / den), std::sqrt(vi / den));
    }
  return res;
}

IQSeries synth_telegraph(double nbar, double T_bf, const IQMeta& meta_in, double duration, std::uint64_t seed) {
  meta_in.validate();
  if (!(nbar >= 0.0) || !std::isfinite(nbar)) throw Error(ErrorKind::InvalidArgument, "nbar must be >= 0");
  if (!(T_bf > meta_in.T_m))
    throw Error(ErrorKind::UnresolvableJumps, "bit-flip time must exceed the integration time T_m");
  IQMeta meta = meta_in;
  meta.seed = seed;
  meta.generator = "telegraph";
  long n = sample_count(duration, meta.T_m);

  CounterRng flips(seed, 1), noise(seed, 2);
  double amp = std::sqrt(2.0 * meta.kappa_c * meta.eta * nbar);
  double sg = std::sqrt(meta.G), sd = std::sqrt(meta.T_m);
  bool finite = std::isfinite(T_bf);
  double state = flips.uniform() <= 0.5 ? 1.0 : -1.0;
  double next = finite ? flips.exponential(T_bf) : std::numeric_limits<double>::infinity();

  IQSeries out;
  out.meta = meta;
  out.I.resize(n);
  out.Q.resize(n);
  for (long k = 0; k < n; ++k) {
    double t0 = double(k) * meta.T_m, t1 = double(k + 1) * meta.T_m;
    double integral = 0.0, t = t0;
    while (next < t1) {
      integral += state * (next - t);
      t = next;
      state = -state;
      next += flips.exponential(T_bf);
    }
    integral += state * (t1 - t);
    out.I[k] = sg * (amp * integral + sd * noise.normal());
    out.Q[k] = sg * sd * noise.normal();
  }
  return out;
}

namespace {
void require_samples(const IQSeries& s) {
  if (s.I.empty()) throw Error(ErrorKind::InvalidArgument, "empty series");
  if (s.I.size() < 100) throw Error(ErrorKind::InvalidArgument, "need at least 100 samples");
  if (s.Q.size() != s.I.size()) throw Error(ErrorKind::DimensionMismatch, "I and Q lengths differ");
}
}  // namespace

Moment iq_power(const IQSeries& s) {
  require_samples(s);
  double n = double(s.size()), sum = 0.0, sum2 = 0.0;
  for (std::size_t k = 0; k < s.size(); ++k) {
    double p = s.I[k] * s.I[k] + s.Q[k] * s.Q[k];
    sum += p;
    sum2 += p * p;
  }
  double mean = sum / n;
  double var = std::max(0.0, (sum2 - n * mean * mean) / (n - 1.0));
  return {mean, std::sqrt(var / n)};
}

double vacuum_offset(const IQMeta& m) { return 2.0 * m.G * m.T_m; }

Moment iq_power_excess(const IQSeries& s) {
  Moment m = iq_power(s);
  m.mean -= vacuum_offset(s.meta);
  return m;
}

Moment iq_power_excess(const IQSeries& s, const IQSeries& ref) {
  Moment a = iq_power(s), b = iq_power(ref);
  return {a.mean - b.mean, std::hypot(a.stderr_, b.stderr_)};
}

PhotonEstimate photon_from_trace(const IQSeries& s, double G, double kappa_c, double eta) {
  double T = s.meta.T_m;
  double den = 2.0 * G * kappa_c * eta * T * T;
  if (!(den > 0.0)) throw Error(ErrorKind::InvalidArgument, "G, kappa_c and eta must be positive");
  Moment m = iq_power(s);
  PhotonEstimate p;
  double num = m.mean - 2.0 * G * T;
  p.stderr_ = m.stderr_ / den;
  if (num < 0.0) {
    p.clipped = true;
    p.nbar = 0.0;
  } else {
    p.nbar = num / den;
  }
  return p;
}

double efficiency_from_coherent(const IQSeries& s, double nbar, double kappa_c, double T_m) {
  require_samples(s);
  if (!(nbar > 0.0 && kappa_c > 0.0 && T_m > 0.0))
    throw Error(ErrorKind::InvalidArgument, "nbar, kappa_c and T_m must be positive");
  double n = double(s.size()), mean = 0.0;
  for (double v : s.I) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : s.I) var += (v - mean) * (v - mean);
  var /= n - 1.0;
  if (!(var > 0.0)) throw Error(ErrorKind::DegenerateFit, "sigma(I) = 0");
  return mean * mean / var / (2.0 * nbar * kappa_c * T_m);
}

IQSeries rebin(const IQSeries& s, int k) {
  if (k < 1) throw Error(ErrorKind::InvalidArgument, "rebin factor must be >= 1");
  IQSeries out;
  out.meta = s.meta;
  out.meta.T_m = s.meta.T_m * k;
  std::size_t n = s.size() / std::size_t(k);
  out.I.assign(n, 0.0);
  out.Q.assign(n, 0.0);
  for (std::size_t j = 0; j < n * k; ++j) {
    out.I[j / k] += s.I[j];
    out.Q[j / k] += s.Q[j];
  }
  return out;
}

NormalizedView normalized(const IQSeries& s) {
  double scale = std::sqrt(s.meta.G * 2.0 * s.meta.kappa_c * s.meta.eta) * s.meta.T_m;
  if (!(scale > 0.0)) throw Error(ErrorKind::InvalidArgument, "normalization needs G, kappa_c, eta > 0");
  NormalizedView v;
  v.x.reserve(s.size());
  v.p.reserve(s.size());
  for (std::size_t k = 0; k < s.size(); ++k) {
    v.x.push_back(s.I[k] / scale);
    v.p.push_back(s.Q[k] / scale);
  }
  return v;
}

std::string sidecar_path(const std::string& csv_path) {
  auto slash = csv_path.find_last_of('/');
  auto dot = csv_path.find_last_of('.');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) return csv_path + ".json";
  return csv_path.substr(0, dot) + ".json";
}

void write_series(const std::string& path, const IQSeries& s) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorKind::Io, "cannot write " + path);
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  os << "time,I,Q\n";
  for (std::size_t k = 0; k < s.size(); ++k) os << double(k) * s.meta.T_m << ',' << s.I[k] << ',' << s.Q[k] << '\n';
  if (!os) throw Error(ErrorKind::Io, "write failed for " + path);

  nlohmann::json j = {{"G", s.meta.G},
                      {"T_m", s.meta.T_m},
                      {"eta", s.meta.eta},
                      {"kappa_c", s.meta.kappa_c},
                      {"seed", s.meta.seed},
                      {"generator", s.meta.generator},
                      {"samples", s.size()}};
  std::ofstream js(sidecar_path(path));
  if (!js) throw Error(ErrorKind::Io, "cannot write " + sidecar_path(path));
  js << j.dump(2) << '\n';
}

IQSeries read_series(const std::string& path) {
  IQSeries s;
  std::ifstream js(sidecar_path(path));
  if (!js) throw Error(ErrorKind::Io, "missing sidecar " + sidecar_path(path));
  try {
    nlohmann::json j = nlohmann::json::parse(js);
    s.meta.G = j.at("G").get<double>();
    s.meta.T_m = j.at("T_m").get<double>();
    s.meta.eta = j.at("eta").get<double>();
    s.meta.kappa_c = j.at("kappa_c").get<double>();
    s.meta.seed = j.value("seed", std::uint64_t(0));
    s.meta.generator = j.value("generator", std::string());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Io, "bad sidecar " + sidecar_path(path) + ": " + e.what());
  }
  s.meta.validate();

  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::Io, "cannot read " + path);
  std::string line;
  std::getline(is, line);
  if (line.rfind("time,I,Q", 0) != 0) throw Error(ErrorKind::Io, path + ": expected header time,I,Q");
  long row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (line.empty()) continue;
    double t, i, q;
    char c1, c2;
    std::istringstream ls(line);
    if (!(ls >> t >> c1 >> i >> c2 >> q) || c1 != ',' || c2 != ',')
      throw Error(ErrorKind::Io, path + ": malformed row " + std::to_string(row));
    s.I.push_back(i);
    s.Q.push_back(q);
  }
  return s;
}

}  // namespace catsim
