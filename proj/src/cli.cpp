#include "catsim/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <sstream>

#include "CLI11.hpp"
#include "catsim/ats.hpp"
#include "catsim/calib.hpp"
#include "catsim/error.hpp"
#include "catsim/hetero.hpp"
#include "catsim/jumps.hpp"
#include "catsim/meanfield.hpp"
#include "catsim/models.hpp"
#include "catsim/parallel.hpp"
#include "json.hpp"

namespace catsim {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr double kPi = 3.14159265358979323846;

enum class Kind { Num, Int, Str, Bool, List };

struct Param {
  std::string key;
  Kind kind;
  json def;  // null: no default
  std::string help;
  bool required = false;
  bool nonneg = false;
};

struct Context {
  json cfg;
  fs::path out;
};

using Runner = std::function<std::string(const Context&)>;

struct Command {
  std::string name;
  std::string help;
  std::vector<Param> params;
  Runner run;
};

[[noreturn]] void invalid(const std::string& msg) { throw Error(ErrorKind::InvalidArgument, msg); }

std::string flag_name(const std::string& key) {
  std::string s = key;
  for (char& c : s)
    if (c == '_') c = '-';
  return s;
}

double parse_double(const std::string& key, const std::string& s) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    invalid("--" + flag_name(key) + ": not a number: " + s);
  }
  if (pos != s.size()) invalid("--" + flag_name(key) + ": not a number: " + s);
  return v;
}

json parse_raw(const Param& p, const std::string& s) {
  switch (p.kind) {
    case Kind::Num:
      return parse_double(p.key, s);
    case Kind::Int: {
      std::size_t pos = 0;
      long long v = 0;
      try {
        v = std::stoll(s, &pos);
      } catch (const std::exception&) {
        invalid("--" + flag_name(p.key) + ": not an integer: " + s);
      }
      if (pos != s.size()) invalid("--" + flag_name(p.key) + ": not an integer: " + s);
      return v;
    }
    case Kind::List: {
      json a = json::array();
      std::stringstream ss(s);
      std::string item;
      while (std::getline(ss, item, ',')) a.push_back(parse_double(p.key, item));
      return a;
    }
    case Kind::Str:
      return s;
    case Kind::Bool:
      break;
  }
  return json();
}

json check_value(const Param& p, json v) {
  auto bad = [&](const char* what) { invalid("config key '" + p.key + "' must be " + what); };
  switch (p.kind) {
    case Kind::Num:
      if (!v.is_number()) bad("a number");
      v = v.get<double>();
      break;
    case Kind::Int:
      if (!v.is_number_integer()) bad("an integer");
      break;
    case Kind::Str:
      if (!v.is_string()) bad("a string");
      break;
    case Kind::Bool:
      if (!v.is_boolean()) bad("a boolean");
      break;
    case Kind::List:
      if (v.is_number()) v = json::array({v});
      if (!v.is_array() || v.empty()) bad("a nonempty list of numbers");
      for (auto& x : v) {
        if (!x.is_number()) bad("a nonempty list of numbers");
        x = x.get<double>();
      }
      break;
  }
  if (p.nonneg) {
    auto check = [&](const json& x) {
      double d = x.get<double>();
      if (!(d >= 0.0) || !std::isfinite(d)) invalid("'" + p.key + "' must be finite and nonnegative");
    };
    if (v.is_array())
      for (const auto& x : v) check(x);
    else if (v.is_number())
      check(v);
  }
  return v;
}

json load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::Io, "cannot read config " + path);
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Io, "bad config " + path + ": " + e.what());
  }
  if (!j.is_object()) invalid("config must be a JSON object");
  // a sidecar written by this tool can be fed back as a config
  if (j.contains("config") && j["config"].is_object()) j = j["config"];
  return j;
}

// ---- output helpers

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return os.str();
}

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::setprecision(digits) << v;
  return os.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorKind::Io, "cannot write " + path.string());
  os << text;
  if (!os) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

void write_sidecar(const fs::path& path, const std::string& command, const json& cfg, const json& results) {
  json j = {{"command", command}, {"config", cfg}, {"results", results}};
  write_file(path, j.dump(2) + "\n");
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::vector<double> linspace(double lo, double hi, int n) {
  if (n < 1) invalid("grid needs at least one point");
  if (n == 1) return {lo};
  std::vector<double> v(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) v[std::size_t(k)] = lo + (hi - lo) * double(k) / double(n - 1);
  return v;
}

std::vector<double> list(const json& cfg, const char* key) { return cfg.at(key).get<std::vector<double>>(); }
double num(const json& cfg, const char* key) { return cfg.at(key).get<double>(); }
int integer(const json& cfg, const char* key) { return cfg.at(key).get<int>(); }

std::uint64_t seed_of(const json& cfg) {
  if (cfg.at("seed").is_null()) invalid("--seed is required for stochastic commands");
  long long s = cfg.at("seed").get<long long>();
  if (s < 0) invalid("--seed must be nonnegative");
  return std::uint64_t(s);
}

TruncationPolicy policy_of(const std::string& s) {
  if (s == "four-times-mean") return TruncationPolicy::FourTimesMean;
  if (s == "poisson-tail") return TruncationPolicy::PoissonTail;
  invalid("policy must be four-times-mean or poisson-tail");
}

// ---- commands

std::string run_steady_scan(const Context& c) {
  const json& g = c.cfg;
  double ka = kTwoPi * num(g, "kappa_a"), kb = kTwoPi * num(g, "kappa_b"), g2 = kTwoPi * num(g, "g2");
  if (ka <= 0.0 || kb <= 0.0 || g2 <= 0.0) invalid("kappa_a, kappa_b and g2 must be positive");
  auto eps_hz = linspace(num(g, "eps_min"), num(g, "eps_max"), integer(g, "points"));
  std::vector<double> eps(eps_hz.size());
  for (std::size_t k = 0; k < eps.size(); ++k) eps[k] = kTwoPi * eps_hz[k];

  bool quantum = g.at("quantum").get<bool>();
  std::ostringstream os;
  if (quantum) {
    QuantumCurveOptions qo;
    qo.dim = integer(g, "dim");
    qo.min_dim = integer(g, "min_dim");
    qo.policy = policy_of(g.at("policy").get<std::string>());
    auto curve = quantum_vs_classical_curve(g2, ka, kb, eps, qo);
    os << "eps_d_Hz,nbar_classical,nbar_quantum,dim\n";
    for (std::size_t k = 0; k < eps.size(); ++k)
      os << fmt(eps_hz[k]) << ',' << fmt(curve.classical[k]) << ',' << fmt(curve.quantum[k]) << ','
         << curve.dims[k] << '\n';
  } else {
    os << "eps_d_Hz,nbar_classical\n";
    for (std::size_t k = 0; k < eps.size(); ++k)
      os << fmt(eps_hz[k]) << ',' << fmt(nbar_zero_detuning(eps[k], g2, ka, kb)) << '\n';
  }
  double crit = critical_drive(g2, ka, kb) / kTwoPi;
  write_file(c.out / "steady_scan.csv", os.str());
  write_sidecar(c.out / "steady_scan.json", "steady-scan", g,
                {{"critical_drive_Hz", crit}, {"points", eps.size()}, {"quantum", quantum}});
  return "steady-scan: " + std::to_string(eps.size()) + " points, critical drive " + fixed(crit / 1e6, 4) +
         " MHz -> " + (c.out / "steady_scan.csv").string();
}

std::string run_diamond(const Context& c) {
  const json& g = c.cfg;
  TwoModeParams p;
  p.kappa_a = kTwoPi * num(g, "kappa_a");
  p.kappa_b = kTwoPi * num(g, "kappa_b");
  p.g2 = kTwoPi * num(g, "g2");
  p.eps_d = kTwoPi * num(g, "eps_d");
  if (p.kappa_a <= 0.0 || p.kappa_b <= 0.0 || std::abs(p.g2) <= 0.0) invalid("kappa_a, kappa_b and g2 must be positive");
  // zero half ranges: 1.3 times the extent of the linear edges
  double P = std::abs(p.eps_d * p.g2);
  double ha = num(g, "da_half") > 0.0 ? kTwoPi * num(g, "da_half") : 1.3 * 4.0 * P / p.kappa_b;
  double hb = num(g, "db_half") > 0.0 ? kTwoPi * num(g, "db_half") : 1.3 * 4.0 * P / p.kappa_a;
  if (!(ha > 0.0) || !(hb > 0.0)) invalid("detuning ranges must be positive (nonzero drive)");
  auto da = symmetric_grid(ha, integer(g, "na"));
  auto db = symmetric_grid(hb, integer(g, "nb"));
  auto m = nbar_map(p, da, db);

  std::ostringstream os;
  write_map_csv(os, m, 1.0 / kTwoPi);
  write_file(c.out / "diamond.csv", os.str());

  auto edges = diamond_edges(P, p.kappa_a, p.kappa_b);
  std::ostringstream es;
  es << "edge,delta_a_Hz,delta_b_Hz\n";
  for (const auto& e : edges.curves)
    for (std::size_t k = 0; k < e.delta_a.size(); ++k)
      es << e.name << ',' << fmt(e.delta_a[k] / kTwoPi) << ',' << fmt(e.delta_b[k] / kTwoPi) << '\n';
  write_file(c.out / "diamond_edges.csv", es.str());

  json res = {{"expected_edge_slope", edges.linear_slope()}};
  std::string slope_txt = "n/a";
  try {
    double s = edge_slope_from_map(m);
    res["edge_slope"] = s;
    res["kappa_b_from_slope_Hz"] = kb_from_edge_slope(s, p.kappa_a) / kTwoPi;
    slope_txt = fixed(s, 5);
  } catch (const Error& e) {
    if (is_validation(e.kind())) throw;
    res["edge_slope"] = nullptr;
    res["edge_slope_error"] = e.what();
  }
  write_sidecar(c.out / "diamond.json", "diamond", g, res);
  return "diamond: " + std::to_string(da.size()) + "x" + std::to_string(db.size()) + " map, edge slope " + slope_txt +
         " (expected " + fixed(edges.linear_slope(), 5) + ") -> " + (c.out / "diamond.csv").string();
}

std::string run_trajectory(const Context& c) {
  const json& g = c.cfg;
  IQMeta meta;
  meta.G = num(g, "gain");
  meta.T_m = num(g, "tm");
  meta.eta = num(g, "eta");
  meta.kappa_c = kTwoPi * num(g, "kappa_c");
  meta.seed = seed_of(g);
  double dur = num(g, "dur"), nbar = num(g, "nbar");
  if (!(dur > 0.0)) invalid("--dur must be positive");

  IQSeries s;
  json res;
  if (g.at("surrogate").get<bool>()) {
    double tbf = g.at("tbf").is_null() ? std::numeric_limits<double>::infinity() : num(g, "tbf");
    if (!(tbf > 0.0)) invalid("--tbf must be positive");
    meta.generator = "telegraph";
    s = synth_telegraph(nbar, tbf, meta, dur, meta.seed);
  } else {
    ReducedParams p;
    p.kappa2 = kTwoPi * num(g, "kappa2");
    p.kappa_a = kTwoPi * num(g, "kappa_a");
    if (!(p.kappa2 > 0.0)) invalid("--kappa2 must be positive");
    p.eps2 = 0.5 * p.kappa2 * nbar + 0.25 * p.kappa_a;
    int dim = integer(g, "dim");
    if (dim <= 0) dim = std::max(10, min_dim(nbar, TruncationPolicy::PoissonTail) + 2);
    auto spec = reduced_model(p, dim, TruncationPolicy::PoissonTail);
    meta.generator = "sme";
    SmeDiagnostics diag;
    s = synth_sme(spec, DensityMatrix::pure(coherent(dim, std::sqrt(nbar))), meta, dur, meta.seed, {}, &diag);
    res["dim"] = dim;
    res["dt"] = diag.dt;
    res["eps2_Hz"] = std::abs(p.eps2) / kTwoPi;
  }
  res["samples"] = s.size();
  res["generator"] = meta.generator;

  fs::path csv = c.out / (g.at("name").get<std::string>() + ".csv");
  write_series(csv.string(), s);
  // extend the series sidecar with the resolved config
  fs::path side = sidecar_path(csv.string());
  json j;
  {
    std::ifstream is(side);
    j = json::parse(is);
  }
  j["command"] = "trajectory";
  j["config"] = g;
  j["results"] = res;
  write_file(side, j.dump(2) + "\n");
  return "trajectory: " + std::to_string(s.size()) + " samples (" + meta.generator + ") -> " + csv.string();
}

std::string run_jumps(const Context& c) {
  const json& g = c.cfg;
  auto s = read_series(g.at("in").get<std::string>());
  ThresholdPolicy pol;
  pol.h = num(g, "hysteresis");
  pol.min_separation = num(g, "min_separation");
  auto d = detect_jumps(s, pol);
  BitflipOptions bo;
  bo.confidence = num(g, "confidence");
  bo.include_censored = g.at("include_censored").get<bool>();
  auto est = bitflip_time(d, bo);
  std::unique_ptr<DwellCdf> cdf;
  try {
    cdf = std::make_unique<DwellCdf>(dwell_cdf(d));
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::TooFewDwells) throw;
  }
  json res = jumps_report(d, est, cdf.get());
  res["T_m"] = d.T_m;
  res["levels"] = {d.level_low, d.level_high};

  std::string name = g.at("name").get<std::string>();
  std::ostringstream os;
  os << "index,label,samples,duration_s,censored\n";
  for (std::size_t k = 0; k < d.durations.size(); ++k)
    os << k << ',' << d.labels[k] << ',' << d.samples[k] << ',' << fmt(d.durations[k]) << ','
       << (d.censored[k] ? 1 : 0) << '\n';
  write_file(c.out / (name + "_dwells.csv"), os.str());
  write_sidecar(c.out / (name + ".json"), "jumps", g, res);
  std::string ci = "[" + fixed(est.lo, 4) + ", " + (std::isfinite(est.hi) ? fixed(est.hi, 4) : "inf") + "]";
  return "jumps: " + std::to_string(d.n_jumps()) + " jumps, T_bf = " + fixed(est.T, 5) + " s " + ci +
         (est.lower_bound ? " (lower bound)" : "") + " -> " + (c.out / (name + ".json")).string();
}

json scaling_json(const ScalingFit& f) {
  return {{"factor", f.factor},
          {"T0_s", f.T0},
          {"T_sat_s", finite_or_null(f.T_sat)},
          {"saturated", f.saturated},
          {"breakpoint_nbar", f.breakpoint_nbar},
          {"rss", f.rss}};
}

// least-squares slope of ln T against nbar
double log_slope(const std::vector<double>& n, const std::vector<double>& T) {
  double mn = 0.0, my = 0.0;
  for (std::size_t k = 0; k < n.size(); ++k) {
    mn += n[k];
    my += std::log(T[k]);
  }
  mn /= double(n.size());
  my /= double(n.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t k = 0; k < n.size(); ++k) {
    sxy += (n[k] - mn) * (std::log(T[k]) - my);
    sxx += (n[k] - mn) * (n[k] - mn);
  }
  if (!(sxx > 0.0)) invalid("need at least two distinct photon numbers");
  return sxy / sxx;
}

std::string run_bitflip_quantum(const Context& c) {
  const json& g = c.cfg;
  double k2 = kTwoPi * num(g, "kappa2");
  if (!(k2 > 0.0)) invalid("--kappa2 must be positive");
  auto ratios = list(g, "ratios");
  for (double r : ratios)
    if (!(r > 0.0)) invalid("--ratios must be positive: at kappa_a = 0 the bit-flip time is infinite");
  auto nbars = list(g, "quantum_nbar");
  int dim_opt = integer(g, "dim");

  std::ostringstream os;
  os << "ratio,nbar,eps2_Hz,dim,T_bf_s,T_bf_kappa2\n";
  json per = json::array();
  std::string summary;
  for (double ratio : ratios) {
    std::vector<double> T(nbars.size());
    std::vector<int> dims(nbars.size());
    std::vector<double> eps(nbars.size());
    std::vector<std::string> errs(nbars.size());
    parallel_for(int(nbars.size()), [&](int k) {
      ReducedParams p;
      p.kappa2 = k2;
      p.kappa_a = ratio * k2;
      p.eps2 = 0.5 * k2 * nbars[std::size_t(k)] + 0.25 * p.kappa_a;
      int dim = dim_opt > 0 ? dim_opt : std::max(30, min_dim(nbars[std::size_t(k)], TruncationPolicy::PoissonTail) + 10);
      auto gap = spectral_gap(build_liouvillian(reduced_model(p, dim, TruncationPolicy::PoissonTail)), Sector::Odd);
      T[std::size_t(k)] = 1.0 / gap.rate;
      dims[std::size_t(k)] = dim;
      eps[std::size_t(k)] = std::abs(p.eps2) / kTwoPi;
    });
    for (std::size_t k = 0; k < nbars.size(); ++k)
      os << fmt(ratio) << ',' << fmt(nbars[k]) << ',' << fmt(eps[k]) << ',' << dims[k] << ',' << fmt(T[k]) << ','
         << fmt(T[k] * k2) << '\n';
    json r = {{"ratio", ratio}, {"T_bf_s", T}};
    if (nbars.size() >= 2) {
      double sl = log_slope(nbars, T);
      r["log_slope"] = sl;
      r["factor"] = std::exp(sl);
      summary += " ratio " + fixed(ratio, 4) + ": factor " + fixed(std::exp(sl), 4) + ";";
    }
    per.push_back(r);
  }
  write_file(c.out / "bitflip_scan.csv", os.str());
  write_sidecar(c.out / "bitflip_scan.json", "bitflip-scan", g, {{"quantum", true}, {"scans", per}});
  return "bitflip-scan --quantum:" + summary + " -> " + (c.out / "bitflip_scan.csv").string();
}

std::string run_bitflip_scan(const Context& c) {
  if (c.cfg.at("quantum").get<bool>()) return run_bitflip_quantum(c);
  const json& g = c.cfg;
  std::uint64_t seed = seed_of(g);
  auto nbars = list(g, "nbar");
  double factor = num(g, "factor"), t_ref = num(g, "t_ref"), n_ref = num(g, "n_ref"), t_sat = num(g, "t_sat");
  int dwells = integer(g, "dwells"), per_tbf = integer(g, "samples_per_tbf");
  if (!(factor > 0.0) || !(t_ref > 0.0) || !(t_sat > 0.0)) invalid("factor, t_ref and t_sat must be positive");
  if (dwells < 5 || per_tbf < 5) invalid("--dwells and --samples-per-tbf must be at least 5");

  struct Row {
    double truth = 0.0, T_m = 0.0;
    BitflipEstimate est;
  };
  std::vector<Row> rows(nbars.size());
  parallel_for(int(nbars.size()), [&](int k) {
    Row& r = rows[std::size_t(k)];
    r.truth = std::min(t_sat, t_ref * std::pow(factor, nbars[std::size_t(k)] - n_ref));
    IQMeta meta;
    meta.G = num(g, "gain");
    meta.eta = num(g, "eta");
    meta.kappa_c = kTwoPi * num(g, "kappa_c");
    meta.T_m = std::min(num(g, "tm_max"), r.truth / double(per_tbf));
    meta.seed = seed + std::uint64_t(k);
    meta.generator = "telegraph";
    r.T_m = meta.T_m;
    auto s = synth_telegraph(nbars[std::size_t(k)], r.truth, meta, double(dwells) * r.truth, meta.seed);
    r.est = bitflip_time(detect_jumps(s));
  });

  std::ostringstream os;
  os << "nbar,T_true_s,T_m_s,T_bf_s,lo_s,hi_s,n_dwells\n";
  std::vector<ScalingPoint> pts;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const Row& r = rows[k];
    os << fmt(nbars[k]) << ',' << fmt(r.truth) << ',' << fmt(r.T_m) << ',' << fmt(r.est.T) << ',' << fmt(r.est.lo)
       << ',' << fmt(r.est.hi) << ',' << r.est.n_dwells << '\n';
    pts.push_back({nbars[k], r.est.T});
  }
  auto fit = scaling_fit(pts);
  write_file(c.out / "bitflip_scan.csv", os.str());
  write_sidecar(c.out / "bitflip_scan.json", "bitflip-scan", g, {{"quantum", false}, {"fit", scaling_json(fit)}});
  return "bitflip-scan: factor " + fixed(fit.factor, 4) + " per photon, T_sat " +
         (fit.saturated ? fixed(fit.T_sat, 4) + " s" : std::string("none")) + " -> " +
         (c.out / "bitflip_scan.csv").string();
}

std::string run_calibrate(const Context& c) {
  const json& g = c.cfg;
  auto curve = read_calib_curve(g.at("in").get<std::string>());
  double ka = kTwoPi * num(g, "kappa_a"), kb = kTwoPi * num(g, "kappa_b");
  auto rc = rescale_axes(curve, ka, kb, integer(g, "tail_points"), num(g, "min_r2"));
  FitG2Options o;
  o.X_lo = num(g, "x_lo");
  o.X_hi = num(g, "x_hi");
  o.with_interval = g.at("interval").get<bool>();
  o.box.kappa_ai_lo = kTwoPi * num(g, "kappa_ai_lo");
  o.box.kappa_ai_hi = kTwoPi * num(g, "kappa_ai_hi");
  o.box.kappa_ac_lo = kTwoPi * num(g, "kappa_ac_lo");
  o.box.kappa_ac_hi = kTwoPi * num(g, "kappa_ac_hi");
  o.box.kappa_b_lo = kTwoPi * num(g, "kappa_b_lo");
  o.box.kappa_b_hi = kTwoPi * num(g, "kappa_b_hi");
  auto f = fit_g2(rc, ka, kb, o);
  json res = fit_g2_report(f, ka, kb, o);
  res["rescale"] = {{"drive_scale", rc.drive_scale}, {"power_scale", rc.power_scale}, {"tail_r2", rc.tail_r2}};

  std::string name = g.at("name").get<std::string>();
  std::ostringstream os;
  os << "drive,power,X,Y\n";
  for (std::size_t k = 0; k < rc.x.size(); ++k)
    os << fmt(curve.drive[k]) << ',' << fmt(curve.power[k]) << ',' << fmt(rc.x[k] / rc.x_c) << ','
       << fmt(rc.y[k] / rc.x_c) << '\n';
  write_file(c.out / (name + ".csv"), os.str());
  write_sidecar(c.out / (name + ".json"), "calibrate", g, res);
  std::string interval =
      o.with_interval ? ", interval [" + fixed(f.lo / kTwoPi, 5) + ", " + fixed(f.hi / kTwoPi, 5) + "] Hz" : "";
  return "calibrate: g2/2pi = " + fixed(f.g2 / kTwoPi, 5) + " Hz" + interval + " -> " +
         (c.out / (name + ".json")).string();
}

AtsParams ats_from(const json& g) {
  AtsParams p;
  p.E_C = num(g, "E_C");
  p.E_L = num(g, "E_L");
  p.E_J = num(g, "E_J");
  p.dE_J = num(g, "dE_J");
  p.upsilon = num(g, "upsilon");
  p.omega_a0 = kTwoPi * num(g, "f_a0");
  return p;
}

json energies_json(const AtsEnergies& e) { return {{"E_L_Hz", e.E_L}, {"dE_J_Hz", e.dE_J}, {"E_J_Hz", e.E_J}}; }

std::string run_flux_map(const Context& c) {
  const json& g = c.cfg;
  AtsParams p = ats_from(g);
  FluxMapOptions o;
  o.mem_dim = integer(g, "mem_dim");
  o.buf_dim = integer(g, "buf_dim");
  o.overlap_min = num(g, "overlap_min");
  auto sg = linear_grid(num(g, "sigma_lo"), num(g, "sigma_hi"), integer(g, "n_sigma"));
  auto dg = linear_grid(num(g, "delta_lo"), num(g, "delta_hi"), integer(g, "n_delta"));
  auto m = flux_map(p, sg, dg, o);

  std::string name = g.at("name").get<std::string>();
  std::ostringstream bs, ms;
  write_flux_csv(bs, m, true);
  write_flux_csv(ms, m, false);
  write_file(c.out / (name + "_buffer.csv"), bs.str());
  write_file(c.out / (name + "_memory.csv"), ms.str());

  int ambiguous = m.ambiguous.sum(), below = 0;
  for (Eigen::Index i = 0; i < m.f_b.rows(); ++i)
    for (Eigen::Index j = 0; j < m.f_b.cols(); ++j)
      if (m.f_b(i, j) <= m.f_a(i, j)) ++below;
  auto s1 = flux_point_modes(p, {kPi / 2.0, kPi / 2.0}, o);
  auto s2 = flux_point_modes(p, {kPi / 2.0, -kPi / 2.0}, o);
  auto top = flux_point_modes(p, {0.0, 0.0}, o);
  json res = {{"saddle_plus", {{"sigma", kPi / 2.0}, {"delta", kPi / 2.0}, {"f_b_Hz", s1.f_b}, {"f_a_Hz", s1.f_a}}},
              {"saddle_minus", {{"sigma", kPi / 2.0}, {"delta", -kPi / 2.0}, {"f_b_Hz", s2.f_b}, {"f_a_Hz", s2.f_a}}},
              {"f_bmax_Hz", top.f_b},
              {"ambiguous_pixels", ambiguous},
              {"buffer_below_memory_pixels", below},
              {"kerr_estimate_Hz", memory_kerr_estimate(p, {kPi / 2.0, kPi / 2.0}).K}};
  double lo = std::min(s1.f_b, s2.f_b), hi = std::max(s1.f_b, s2.f_b);
  try {
    res["extract_harmonic"] = energies_json(extract_params(lo, hi, top.f_b, p.E_C));
    res["extract_quartic"] = energies_json(extract_params_quartic(lo, hi, top.f_b, p.E_C));
  } catch (const Error& e) {
    res["extract_error"] = e.what();
  }
  write_sidecar(c.out / (name + ".json"), "flux-map", g, res);
  return "flux-map: " + std::to_string(sg.size()) + "x" + std::to_string(dg.size()) + ", saddles " +
         fixed(s1.f_b / 1e9, 6) + " / " + fixed(s2.f_b / 1e9, 6) + " GHz, " + std::to_string(ambiguous) +
         " ambiguous -> " + (c.out / (name + "_buffer.csv")).string();
}

std::string run_extract(const Context& c) {
  const json& g = c.cfg;
  double f1 = num(g, "fb1"), f2 = num(g, "fb2"), fm = num(g, "fbmax"), ec = num(g, "ec");
  auto e = extract_params(f1, f2, fm, ec);
  json res = {{"harmonic", energies_json(e)}};
  try {
    res["quartic"] = energies_json(extract_params_quartic(f1, f2, fm, ec));
  } catch (const Error& err) {
    res["quartic"] = nullptr;
    res["quartic_error"] = err.what();
  }
  std::string name = g.at("name").get<std::string>();
  write_sidecar(c.out / (name + ".json"), "extract", g, res);
  return "extract: E_L = " + fixed(e.E_L / 1e9, 6) + " GHz, dE_J = " + fixed(e.dE_J / 1e9, 4) +
         " GHz, E_J = " + fixed(e.E_J / 1e9, 5) + " GHz -> " + (c.out / (name + ".json")).string();
}

std::string run_efficiency_rig(const Context& c) {
  const json& g = c.cfg;
  EfficiencyRigSpec rig;
  rig.T1 = num(g, "T1");
  rig.T2 = num(g, "T2");
  rig.chi = kTwoPi * num(g, "chi");
  rig.kappa_c = kTwoPi * num(g, "kappa_c");
  rig.kappa_i = kTwoPi * num(g, "kappa_i");
  for (double w : list(g, "omega_a")) rig.omega_a.push_back(kTwoPi * w);
  rig.omega_q = kTwoPi * num(g, "omega_q");
  for (double d : linspace(num(g, "delta_q_lo"), num(g, "delta_q_hi"), integer(g, "delta_q_points")))
    rig.delta_q.push_back(kTwoPi * d);
  rig.mem_dim = integer(g, "mem_dim");
  rig.validate();
  auto s = qubit_numbersplit(rig);

  std::string name = g.at("name").get<std::string>();
  std::ostringstream os;
  os << "omega_a_Hz,delta_q_Hz,re_a,im_a,qubit_excitation,nbar\n";
  json rows = json::array();
  double min_h = num(g, "min_height");
  for (std::size_t i = 0; i < s.omega_a.size(); ++i) {
    for (std::size_t j = 0; j < s.delta_q.size(); ++j) {
      cplx a = s.a(Eigen::Index(i), Eigen::Index(j));
      os << fmt(s.omega_a[i] / kTwoPi) << ',' << fmt(s.delta_q[j] / kTwoPi) << ',' << fmt(a.real()) << ','
         << fmt(a.imag()) << ',' << fmt(s.qubit_excitation(Eigen::Index(i), Eigen::Index(j))) << ','
         << fmt(s.nbar(Eigen::Index(i), Eigen::Index(j))) << '\n';
    }
    std::vector<double> peaks;
    for (double d : numbersplit_peaks(s, int(i), min_h)) peaks.push_back(d / kTwoPi);
    double ka = rig.kappa_a();
    rows.push_back({{"omega_a_Hz", s.omega_a[i] / kTwoPi},
                    {"nbar_empty_qubit", 4.0 * s.omega_a[i] * s.omega_a[i] / (ka * ka)},
                    {"peaks_Hz", peaks}});
  }
  write_file(c.out / (name + ".csv"), os.str());
  write_sidecar(c.out / (name + ".json"), "efficiency-rig", g, {{"mem_dim", s.mem_dim}, {"rows", rows}});
  return "efficiency-rig: " + std::to_string(s.omega_a.size()) + "x" + std::to_string(s.delta_q.size()) +
         " surface, memory dim " + std::to_string(s.mem_dim) + " -> " + (c.out / (name + ".csv")).string();
}

// ---- command table

Param num_p(std::string key, double def, std::string help, bool nonneg = true) {
  return {std::move(key), Kind::Num, def, std::move(help), false, nonneg};
}
Param int_p(std::string key, long long def, std::string help) {
  return {std::move(key), Kind::Int, def, std::move(help), false, false};
}
Param str_p(std::string key, json def, std::string help, bool required = false) {
  return {std::move(key), Kind::Str, std::move(def), std::move(help), required, false};
}
Param bool_p(std::string key, std::string help) { return {std::move(key), Kind::Bool, false, std::move(help)}; }
Param list_p(std::string key, std::vector<double> def, std::string help) {
  return {std::move(key), Kind::List, def, std::move(help), false, true};
}
Param req_num(std::string key, std::string help) {
  return {std::move(key), Kind::Num, nullptr, std::move(help), true, true};
}
Param seed_p(bool required) {
  return {"seed", Kind::Int, nullptr, "RNG seed (required for stochastic runs)", required, true};
}

std::vector<Command> commands() {
  const std::vector<Param> two_mode = {num_p("kappa_a", 58e3, "memory loss rate kappa_a/2pi (Hz)"),
                                       num_p("kappa_b", 16e6, "buffer loss rate kappa_b/2pi (Hz)"),
                                       num_p("g2", 39e3, "two-to-one coupling g2/2pi (Hz)")};
  std::vector<Command> v;

  {
    Command c{"steady-scan", "photon number vs buffer drive on resonance", two_mode, run_steady_scan};
    c.params.push_back(num_p("eps_min", 0.0, "first drive eps_d/2pi (Hz)"));
    c.params.push_back(num_p("eps_max", 6e6, "last drive eps_d/2pi (Hz)"));
    c.params.push_back(int_p("points", 61, "number of drives"));
    c.params.push_back(bool_p("quantum", "add the reduced-model quantum steady state"));
    c.params.push_back(int_p("dim", 0, "fixed Fock dimension (0: automatic)"));
    c.params.push_back(int_p("min_dim", 30, "smallest automatic Fock dimension"));
    c.params.push_back(str_p("policy", "four-times-mean", "truncation policy: four-times-mean or poisson-tail"));
    v.push_back(c);
  }
  {
    Command c{"diamond", "semi-classical photon number over the detuning plane", two_mode, run_diamond};
    c.params.push_back(num_p("eps_d", 12e6, "buffer drive eps_d/2pi (Hz)"));
    c.params.push_back(num_p("da_half", 0.0, "memory detuning half range (Hz, 0: automatic)"));
    c.params.push_back(num_p("db_half", 0.0, "buffer detuning half range (Hz, 0: automatic)"));
    c.params.push_back(int_p("na", 101, "memory detuning points (odd)"));
    c.params.push_back(int_p("nb", 101, "buffer detuning points (odd)"));
    v.push_back(c);
  }
  {
    Command c{"trajectory",
              "synthetic heterodyne record",
              {bool_p("surrogate", "telegraph surrogate instead of the stochastic master equation"),
               num_p("tbf", 1.0, "surrogate bit-flip time (s)"),
               num_p("nbar", 28.0, "pointer-state photon number"),
               num_p("tm", 1e-3, "integration time per sample (s)"),
               num_p("dur", 10.0, "record duration (s)"),
               seed_p(true),
               num_p("gain", 1.0, "detection gain"),
               num_p("eta", 1.0, "detection efficiency"),
               num_p("kappa_c", 40e3, "coupling to the detection line kappa_c/2pi (Hz)"),
               num_p("kappa2", 1e5, "two-photon loss kappa2/2pi of the reduced model (Hz)"),
               num_p("kappa_a", 58e3, "single-photon loss kappa_a/2pi of the reduced model (Hz)"),
               int_p("dim", 0, "Fock dimension (0: automatic)"),
               str_p("name", "trajectory", "output file stem")},
              run_trajectory};
    v.push_back(c);
  }
  {
    Command c{"jumps",
              "jump detection and bit-flip time from a record",
              {str_p("in", nullptr, "record CSV written by trajectory", true),
               num_p("hysteresis", 0.5, "hysteresis half-width in units of sigma"),
               num_p("min_separation", 2.0, "bimodality threshold (Ashman D)"),
               num_p("confidence", 0.95, "interval confidence"),
               bool_p("include_censored", "count the censored edge dwells"),
               str_p("name", "jumps", "output file stem")},
              run_jumps};
    v.push_back(c);
  }
  {
    Command c{"bitflip-scan",
              "bit-flip time vs photon number",
              {bool_p("quantum", "odd-sector spectral gap of the reduced model instead of the record pipeline"),
               list_p("nbar", {11, 16, 20, 24, 28, 32, 36, 40, 43}, "photon numbers"),
               seed_p(false),
               num_p("factor", 1.4, "surrogate gain per photon"),
               num_p("t_ref", 1e-3, "surrogate bit-flip time at n_ref (s)"),
               num_p("n_ref", 11.0, "reference photon number"),
               num_p("t_sat", 127.0, "surrogate saturation time (s)"),
               int_p("dwells", 300, "expected dwells per record"),
               int_p("samples_per_tbf", 100, "samples per bit-flip time"),
               num_p("tm_max", 1e-3, "longest integration time (s)"),
               num_p("gain", 1.0, "detection gain"),
               num_p("eta", 1.0, "detection efficiency"),
               num_p("kappa_c", 40e3, "coupling to the detection line kappa_c/2pi (Hz)"),
               num_p("kappa2", 380.0, "quantum: two-photon loss kappa2/2pi (Hz)"),
               list_p("ratios", {0.1, 150.0}, "quantum: kappa_a/kappa2 values"),
               list_p("quantum_nbar", {2, 3, 4, 5, 6}, "quantum: photon numbers"),
               int_p("dim", 0, "quantum: Fock dimension (0: automatic)")},
              run_bitflip_scan};
    v.push_back(c);
  }
  {
    Command c{"calibrate",
              "two-photon coupling from a radiated-power curve",
              {str_p("in", nullptr, "CSV with header drive,power", true),
               num_p("kappa_a", 58e3, "memory loss kappa_a/2pi (Hz)"),
               num_p("kappa_b", 16e6, "buffer loss kappa_b/2pi (Hz)"),
               int_p("tail_points", 3, "points in the linear tail"),
               num_p("min_r2", 0.99, "required tail linearity"),
               num_p("x_lo", 0.5, "fit domain start in units of the critical drive"),
               num_p("x_hi", 3.0, "fit domain end in units of the critical drive"),
               {"interval", Kind::Bool, true, "propagate the kappa box into a g2 interval"},
               num_p("kappa_ai_lo", 15e3, "internal memory loss box (Hz)"),
               num_p("kappa_ai_hi", 22e3, "internal memory loss box (Hz)"),
               num_p("kappa_ac_lo", 39e3, "memory coupling box (Hz)"),
               num_p("kappa_ac_hi", 42e3, "memory coupling box (Hz)"),
               num_p("kappa_b_lo", 13e6, "buffer loss box (Hz)"),
               num_p("kappa_b_hi", 20e6, "buffer loss box (Hz)"),
               str_p("name", "calibrate", "output file stem")},
              run_calibrate};
    v.push_back(c);
  }
  {
    Command c{"flux-map",
              "buffer and memory frequencies over the flux plane",
              {num_p("E_C", 72.6e6, "charging energy E_C/h (Hz)"),
               num_p("E_L", 62.40e9, "inductive energy E_L/h (Hz)"),
               num_p("E_J", 37.00e9, "junction energy E_J/h (Hz)"),
               num_p("dE_J", 0.207e9, "junction asymmetry dE_J/h (Hz)"),
               num_p("upsilon", 0.036, "hybridization factor"),
               num_p("f_a0", 4.0457e9, "bare memory frequency (Hz)"),
               num_p("sigma_lo", 0.0, "phi_Sigma start (rad)", false),
               num_p("sigma_hi", kPi, "phi_Sigma end (rad)", false),
               int_p("n_sigma", 51, "phi_Sigma points"),
               num_p("delta_lo", -kPi / 2.0, "phi_Delta start (rad)", false),
               num_p("delta_hi", kPi / 2.0, "phi_Delta end (rad)", false),
               int_p("n_delta", 51, "phi_Delta points"),
               int_p("mem_dim", 15, "memory Fock dimension"),
               int_p("buf_dim", 15, "buffer Fock dimension"),
               num_p("overlap_min", 0.5, "label overlap below which a pixel is ambiguous"),
               str_p("name", "flux_map", "output file stem")},
              run_flux_map};
    v.push_back(c);
  }
  {
    Command c{"extract",
              "circuit energies from the saddle and maximum buffer frequencies",
              {req_num("fb1", "lower saddle buffer frequency (Hz)"), req_num("fb2", "upper saddle buffer frequency (Hz)"),
               req_num("fbmax", "maximum buffer frequency (Hz)"), req_num("ec", "charging energy E_C/h (Hz)"),
               str_p("name", "extract", "output file stem")},
              run_extract};
    v.push_back(c);
  }
  {
    Command c{"efficiency-rig",
              "number-split qubit spectroscopy of the driven memory",
              {num_p("T1", 19.3e-6, "qubit T1 (s)"),
               num_p("T2", 24.3e-6, "qubit T2 (s)"),
               num_p("chi", 1.75e6, "dispersive shift chi/2pi (Hz)"),
               num_p("kappa_c", 38e3, "memory coupling kappa_c/2pi (Hz)"),
               num_p("kappa_i", 17e3, "memory internal loss kappa_i/2pi (Hz)"),
               list_p("omega_a", {5e3, 15e3, 25e3}, "memory drive amplitudes Omega_a/2pi (Hz)"),
               num_p("omega_q", 15e3, "qubit drive Omega_q/2pi (Hz)"),
               num_p("delta_q_lo", -1e6, "qubit detuning start (Hz)", false),
               num_p("delta_q_hi", 6e6, "qubit detuning end (Hz)", false),
               int_p("delta_q_points", 141, "qubit detuning points"),
               int_p("mem_dim", 0, "memory Fock dimension (0: automatic)"),
               num_p("min_height", 0.0, "smallest reported peak height"),
               str_p("name", "efficiency_rig", "output file stem")},
              run_efficiency_rig};
    v.push_back(c);
  }
  return v;
}

struct Bound {
  std::map<std::string, std::string> raw;
  std::map<std::string, bool> flags;
  std::map<std::string, CLI::Option*> opts;
  std::string config;
  std::string out = ".";
};

json resolve(const Command& cmd, Bound& b) {
  json cfg = json::object();
  for (const auto& p : cmd.params) cfg[p.key] = p.def;
  if (!b.config.empty()) {
    json file = load_config(b.config);
    for (auto it = file.begin(); it != file.end(); ++it) {
      auto p = std::find_if(cmd.params.begin(), cmd.params.end(), [&](const Param& q) { return q.key == it.key(); });
      if (p == cmd.params.end()) invalid("unknown config key '" + it.key() + "' for " + cmd.name);
      cfg[p->key] = it.value().is_null() && !p->required ? p->def : it.value();
    }
  }
  for (const auto& p : cmd.params) {
    if (b.opts[p.key]->count() == 0) continue;
    cfg[p.key] = p.kind == Kind::Bool ? json(b.flags[p.key]) : parse_raw(p, b.raw[p.key]);
  }
  for (const auto& p : cmd.params) {
    if (cfg[p.key].is_null()) {
      if (p.required) invalid("--" + flag_name(p.key) + " is required");
      continue;
    }
    cfg[p.key] = check_value(p, cfg[p.key]);
  }
  return cfg;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"catsim: two-photon dissipative oscillator simulations"};
  app.require_subcommand(1);
  auto cmds = commands();
  std::vector<Bound> bound(cmds.size());
  std::vector<CLI::App*> subs;
  for (std::size_t i = 0; i < cmds.size(); ++i) {
    auto* sub = app.add_subcommand(cmds[i].name, cmds[i].help);
    Bound& b = bound[i];
    sub->add_option("--config", b.config, "JSON config (a sidecar from a previous run also works)");
    sub->add_option("--out", b.out, "output directory")->capture_default_str();
    for (const auto& p : cmds[i].params) {
      std::string f = "--" + flag_name(p.key);
      std::string help = p.help;
      if (!p.def.is_null() && p.kind != Kind::Bool) help += " [" + p.def.dump() + "]";
      if (p.kind == Kind::Bool)
        b.opts[p.key] = sub->add_flag(f + ",!--no-" + flag_name(p.key), b.flags[p.key], help);
      else
        b.opts[p.key] = sub->add_option(f, b.raw[p.key], help);
    }
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  for (std::size_t i = 0; i < cmds.size(); ++i) {
    if (!subs[i]->parsed()) continue;
    try {
      Context ctx;
      ctx.cfg = resolve(cmds[i], bound[i]);
      ctx.out = bound[i].out;
      std::error_code ec;
      fs::create_directories(ctx.out, ec);
      if (ec) throw Error(ErrorKind::Io, "cannot create " + ctx.out.string() + ": " + ec.message());
      out << cmds[i].run(ctx) << "\n";
      return 0;
    } catch (const Error& e) {
      err << "catsim " << cmds[i].name << ": " << e.what() << "\n";
      return is_validation(e.kind()) ? 2 : 3;
    } catch (const json::exception& e) {
      err << "catsim " << cmds[i].name << ": invalid config: " << e.what() << "\n";
      return 2;
    } catch (const std::exception& e) {
      err << "catsim " << cmds[i].name << ": " << e.what() << "\n";
      return 3;
    }
  }
  return 2;
}

}  // namespace catsim
