#include "catsim/calib.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <boost/math/tools/minima.hpp>

#include "catsim/error.hpp"
#include "catsim/parallel.hpp"

namespace catsim {

void CalibCurve::validate() const {
  if (drive.size() != power.size()) throw Error(ErrorKind::DimensionMismatch, "drive and power lengths differ");
  if (drive.size() < 3) throw Error(ErrorKind::InvalidArgument, "calibration curve needs at least 3 points");
  for (std::size_t k = 1; k < drive.size(); ++k)
    if (!(drive[k] > drive[k - 1])) throw Error(ErrorKind::InvalidArgument, "drive grid must be increasing");
  for (double v : power)
    if (!std::isfinite(v)) throw Error(ErrorKind::InvalidArgument, "power must be finite");
  if (averages < 1) throw Error(ErrorKind::InvalidArgument, "averages must be >= 1");
  if (T_m < 0.0) throw Error(ErrorKind::InvalidArgument, "T_m must be >= 0");
}

CalibCurve read_calib_curve(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::Io, "cannot read " + path);
  std::string line;
  std::getline(is, line);
  if (line.rfind("drive,power", 0) != 0) throw Error(ErrorKind::Io, path + ": expected header drive,power");
  CalibCurve c;
  long row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (line.empty()) continue;
    double d, p;
    char comma;
    std::istringstream ls(line);
    if (!(ls >> d >> comma >> p) || comma != ',') throw Error(ErrorKind::Io, path + ": malformed row " + std::to_string(row));
    c.drive.push_back(d);
    c.power.push_back(p);
  }
  c.validate();
  return c;
}

RescaledCurve rescale_axes(const CalibCurve& c, double kappa_a, double kappa_b, int tail_points, double min_r2) {
  c.validate();
  if (kappa_a <= 0.0 || kappa_b <= 0.0) throw Error(ErrorKind::InvalidArgument, "kappa_a and kappa_b must be positive");
  if (tail_points < 3 || tail_points > int(c.drive.size()))
    throw Error(ErrorKind::InvalidArgument, "tail_points must be in [3, curve size]");

  const std::size_t n = c.drive.size(), k0 = n - std::size_t(tail_points);
  double mx = 0.0, my = 0.0;
  for (std::size_t k = k0; k < n; ++k) {
    mx += c.drive[k];
    my += c.power[k];
  }
  mx /= tail_points;
  my /= tail_points;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t k = k0; k < n; ++k) {
    double dx = c.drive[k] - mx, dy = c.power[k] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  double slope = sxy / sxx;
  double r2 = syy > 0.0 ? sxy * sxy / (sxx * syy) : 0.0;
  if (!(slope > 0.0) || r2 < min_r2) throw Error(ErrorKind::DegenerateFit, "no linear tail");
  double drive0 = mx - my / slope;
  if (!(drive0 > 0.0)) throw Error(ErrorKind::DegenerateFit, "no linear tail: tail does not cross zero at positive drive");

  RescaledCurve r;
  r.x_c = kappa_a * kappa_b / 8.0;
  r.drive_scale = r.x_c / drive0;
  r.power_scale = r.drive_scale / slope;
  r.tail_r2 = r2;
  r.tail_points = tail_points;
  r.x.resize(n);
  r.y.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    r.x[k] = c.drive[k] * r.drive_scale;
    r.y[k] = c.power[k] * r.power_scale;
  }
  return r;
}

int normalized_model_dim(double X, double r, const NormalizedModelOptions& opt) {
  if (opt.dim > 0) return opt.dim;
  double nbar_cl = 0.5 * r * std::max(0.0, X - 1.0);
  int d = std::max(min_dim(nbar_cl, TruncationPolicy::PoissonTail), int(std::ceil(6.0 * std::sqrt(r))) + 20);
  return int(std::ceil(d * opt.dim_scale));
}

double normalized_model(double X, double r, const NormalizedModelOptions& opt) {
  if (!(r > 0.0) || X < 0.0) throw Error(ErrorKind::InvalidArgument, "normalized model needs r > 0 and X >= 0");
  ReducedParams p;
  p.kappa2 = 1.0;
  p.kappa_a = r;
  p.eps2 = r * X / 4.0;
  int dim = normalized_model_dim(X, r, opt);
  auto spec = reduced_model(p, dim, TruncationPolicy::PoissonTail);
  SteadyStateOptions so;
  so.check_kernel = false;
  auto rho = steady_state(build_liouvillian(spec), so);
  return 2.0 * expect(number(dim), rho).real() / r;
}

namespace {

struct DomainPoints {
  std::vector<double> X, Y;
};

DomainPoints fit_domain(const RescaledCurve& c, const FitG2Options& opt) {
  DomainPoints d;
  for (std::size_t k = 0; k < c.x.size(); ++k) {
    double X = c.x[k] / c.x_c;
    if (X >= opt.X_lo && X <= opt.X_hi) {
      d.X.push_back(X);
      d.Y.push_back(c.y[k] / c.x_c);
    }
  }
  return d;
}

// The data were normalized by their own tail line; the model gets the same
// treatment so the quantum offset of the tail does not bias r.
struct TailCorrection {
  double X0 = 1.0;  // model tail x-intercept
  double slope = 1.0;
};

TailCorrection tail_correction(const RescaledCurve& c, double r, const NormalizedModelOptions& mo) {
  const int n = int(c.x.size()), m = c.tail_points;
  std::vector<double> Xd(m);
  for (int k = 0; k < m; ++k) Xd[k] = c.x[n - m + k] / c.x_c;
  TailCorrection t;
  for (int it = 0; it < 8; ++it) {
    std::vector<double> X(m), Y(m);
    for (int k = 0; k < m; ++k) X[k] = Xd[k] * t.X0;
    parallel_for(m, [&](int k) { Y[k] = normalized_model(X[k], r, mo); });
    double mx = 0.0, my = 0.0;
    for (int k = 0; k < m; ++k) {
      mx += X[k] / m;
      my += Y[k] / m;
    }
    double sxx = 0.0, sxy = 0.0;
    for (int k = 0; k < m; ++k) {
      sxx += (X[k] - mx) * (X[k] - mx);
      sxy += (X[k] - mx) * (Y[k] - my);
    }
    double X0 = mx - my * sxx / sxy;
    t.slope = sxy / sxx;
    bool done = std::abs(X0 - t.X0) < 1e-7;
    t.X0 = X0;
    if (done) break;
  }
  if (!(t.slope > 0.0) || !(t.X0 > 0.0)) throw Error(ErrorKind::DegenerateFit, "model has no linear tail at this ratio");
  return t;
}

std::vector<double> model_values(const DomainPoints& d, double r, const NormalizedModelOptions& mo,
                                 const TailCorrection& t) {
  std::vector<double> y(d.X.size());
  parallel_for(int(d.X.size()), [&](int k) { y[k] = normalized_model(d.X[k] * t.X0, r, mo) / (t.slope * t.X0); });
  return y;
}

double objective(const DomainPoints& d, double r, const NormalizedModelOptions& mo, const TailCorrection& t) {
  auto y = model_values(d, r, mo, t);
  double s = 0.0;
  for (std::size_t k = 0; k < y.size(); ++k) s += (y[k] - d.Y[k]) * (y[k] - d.Y[k]);
  return s;
}

}  // namespace

double fit_g2_objective(const RescaledCurve& c, double r, const FitG2Options& opt) {
  return objective(fit_domain(c, opt), r, opt.model, tail_correction(c, r, opt.model));
}

double g2_from_ratio(double r, double kappa_a, double kappa_b) { return std::sqrt(kappa_a * kappa_b / (4.0 * r)); }

FitG2Result fit_g2(const RescaledCurve& c, double kappa_a, double kappa_b, const FitG2Options& opt) {
  if (kappa_a <= 0.0 || kappa_b <= 0.0) throw Error(ErrorKind::InvalidArgument, "kappa_a and kappa_b must be positive");
  DomainPoints d = fit_domain(c, opt);
  if (d.X.size() < 3) throw Error(ErrorKind::InvalidArgument, "fewer than 3 points inside the fit domain");

  // Seed: the normalized curve at X <= 1 falls monotonically with r, so the
  // point closest to threshold from below fixes r by bisection.
  int seed = -1;
  for (std::size_t k = 0; k < d.X.size(); ++k)
    if (d.X[k] <= 1.0 && d.X[k] >= 0.8 && (seed < 0 || d.X[k] > d.X[seed])) seed = int(k);
  if (seed < 0) throw Error(ErrorKind::InvalidArgument, "curve does not sample the critical region (X in [0.8, 1])");

  FitG2Result f;
  double lo = std::log(opt.r_min), hi = std::log(opt.r_max);
  auto g = [&](double lr) {
    ++f.evaluations;
    return normalized_model(d.X[seed], std::exp(lr), opt.model) - d.Y[seed];
  };
  double lr0;
  if (g(lo) <= 0.0) {
    lr0 = lo;
  } else if (g(hi) >= 0.0) {
    lr0 = hi;
  } else {
    while (hi - lo > std::log(1.1)) {
      double mid = 0.5 * (lo + hi);
      (g(mid) > 0.0 ? lo : hi) = mid;
    }
    lr0 = 0.5 * (lo + hi);
  }
  f.r_seed = std::exp(lr0);

  // Alternate Brent searches at a frozen tail correction with updates of the
  // correction, until r settles.
  const double lr_min = std::log(opt.r_min), lr_max = std::log(opt.r_max);
  double lr = lr0, half = std::log(2.0);
  TailCorrection tc;
  std::pair<double, double> best{lr0, 0.0};
  bool settled = false;
  for (int outer = 0; outer < opt.max_outer && !settled; ++outer) {
    tc = tail_correction(c, std::exp(lr), opt.model);
    f.evaluations += c.tail_points;
    double a = std::max(lr_min, lr - half), b = std::min(lr_max, lr + half);
    std::uintmax_t iters = std::uintmax_t(opt.max_iter);
    auto obj = [&](double x) {
      ++f.evaluations;
      return objective(d, std::exp(x), opt.model, tc);
    };
    best = boost::math::tools::brent_find_minima(obj, a, b, opt.brent_bits, iters);
    if (iters >= std::uintmax_t(opt.max_iter)) throw Error(ErrorKind::NonConvergence, "Brent search did not converge");
    const double edge = 1e-3;
    if ((best.first - a < edge && a > lr_min) || (b - best.first < edge && b < lr_max))
      throw Error(ErrorKind::NonConvergence, "optimum sits on the edge of the search bracket");
    settled = std::abs(best.first - lr) < opt.r_rel_tol;
    lr = best.first;
    half = std::log(1.1);
    ++f.outer_iterations;
  }
  if (!settled) throw Error(ErrorKind::NonConvergence, "tail correction and r did not settle");

  f.r = std::exp(best.first);
  tc = tail_correction(c, f.r, opt.model);
  auto y_fit = model_values(d, f.r, opt.model, tc);
  f.residual = 0.0;
  for (std::size_t k = 0; k < y_fit.size(); ++k) f.residual += (y_fit[k] - d.Y[k]) * (y_fit[k] - d.Y[k]);
  f.evaluations += c.tail_points + int(d.X.size());
  f.tail_X0 = tc.X0;
  f.tail_slope = tc.slope;
  f.points = int(d.X.size());
  f.g2 = g2_from_ratio(f.r, kappa_a, kappa_b);

  if (opt.check_truncation) {
    NormalizedModelOptions big = opt.model;
    big.dim_scale *= 1.25;
    auto y_big = model_values(d, f.r, big, tail_correction(c, f.r, big));
    f.truncation_change = 0.0;
    for (std::size_t k = 0; k < y_big.size(); ++k)
      f.truncation_change = std::max(f.truncation_change, std::abs(y_big[k] - y_fit[k]));
  }

  if (opt.with_interval) {
    // The rescaled curve does not depend on the kappas, so every corner shares r.
    const KappaBox& k = opt.box;
    f.lo = std::numeric_limits<double>::infinity();
    f.hi = 0.0;
    for (double ai : {k.kappa_ai_lo, k.kappa_ai_hi})
      for (double ac : {k.kappa_ac_lo, k.kappa_ac_hi})
        for (double kb : {k.kappa_b_lo, k.kappa_b_hi}) {
          G2Corner cn{ai + ac, kb, g2_from_ratio(f.r, ai + ac, kb)};
          f.corners.push_back(cn);
          f.lo = std::min(f.lo, cn.g2);
          f.hi = std::max(f.hi, cn.g2);
        }
  }
  return f;
}

nlohmann::json fit_g2_report(const FitG2Result& f, double kappa_a, double kappa_b, const FitG2Options& opt) {
  nlohmann::json j;
  j["g2_Hz"] = f.g2 / kTwoPi;
  if (opt.with_interval)
    j["interval"] = {f.lo / kTwoPi, f.hi / kTwoPi};
  else
    j["interval"] = nullptr;
  j["residual"] = f.residual;
  j["kappa_ratio"] = f.r;
  j["points"] = f.points;
  j["evaluations"] = f.evaluations;
  j["truncation_change"] = f.truncation_change;
  nlohmann::json corners = nlohmann::json::array();
  for (const auto& c : f.corners)
    corners.push_back({{"kappa_a_Hz", c.kappa_a / kTwoPi}, {"kappa_b_Hz", c.kappa_b / kTwoPi}, {"g2_Hz", c.g2 / kTwoPi}});
  j["corners"] = corners;
  j["settings"] = {{"kappa_a_Hz", kappa_a / kTwoPi},
                   {"kappa_b_Hz", kappa_b / kTwoPi},
                   {"X_range", {opt.X_lo, opt.X_hi}},
                   {"r_range", {opt.r_min, opt.r_max}},
                   {"dim", opt.model.dim},
                   {"truncation", "poisson-tail"},
                   {"brent_bits", opt.brent_bits}};
  return j;
}

double kb_from_edge_slope(double slope, double kappa_a) {
  if (!(slope < 0.0)) throw Error(ErrorKind::InvalidArgument, "edge slope must be negative");
  if (!(kappa_a > 0.0)) throw Error(ErrorKind::InvalidArgument, "kappa_a must be positive");
  return -slope * kappa_a;
}

double excess_loss(double kappa_ai, double kappa2, double nbar) {
  if (kappa_ai < 0.0 || kappa2 < 0.0 || nbar < 0.0) throw Error(ErrorKind::InvalidArgument, "inputs must be nonnegative");
  return kappa_ai + 2.0 * kappa2 * nbar;
}

double excess_loss_g2(double kappa_ai, double g2, double kappa_b, double nbar) {
  if (kappa_ai < 0.0 || kappa_b <= 0.0 || nbar < 0.0) throw Error(ErrorKind::InvalidArgument, "inputs must be nonnegative");
  return kappa_ai + 8.0 * nbar * g2 * g2 / kappa_b;
}

void EfficiencyRigSpec::validate() const {
  if (!(T1 > 0.0) || !(T2 > 0.0)) throw Error(ErrorKind::InvalidArgument, "T1 and T2 must be positive");
  if (T2 > 2.0 * T1) throw Error(ErrorKind::InvalidArgument, "T2 must not exceed 2 T1");
  if (!(chi > 0.0)) throw Error(ErrorKind::InvalidArgument, "chi must be positive");
  if (kappa_c < 0.0 || kappa_i < 0.0 || !(kappa_a() > 0.0))
    throw Error(ErrorKind::InvalidArgument, "memory loss rates must be nonnegative with a positive sum");
  if (qubit_dim != 2 && qubit_dim != 3) throw Error(ErrorKind::InvalidDimension, "qubit_dim must be 2 or 3");
  if (mem_dim < 0 || mem_dim == 1) throw Error(ErrorKind::InvalidDimension, "mem_dim must be 0 or >= 2");
}

int rig_mem_dim(const EfficiencyRigSpec& rig, double omega_a) {
  if (rig.mem_dim > 0) return rig.mem_dim;
  double nb = 4.0 * omega_a * omega_a / (rig.kappa_a() * rig.kappa_a());
  return std::max({8, min_dim(nb, TruncationPolicy::FourTimesMean), min_dim(nb, TruncationPolicy::PoissonTail)});
}

ModelSpec rig_model(const EfficiencyRigSpec& rig, double omega_a, double delta_q, int mem_dim) {
  rig.validate();
  Dims dims{mem_dim, rig.qubit_dim};
  auto a = embed(annihilation(mem_dim), dims, 0);
  auto q = embed(annihilation(rig.qubit_dim), dims, 1);
  auto na = embed(number(mem_dim), dims, 0);
  auto nq = embed(number(rig.qubit_dim), dims, 1);
  OperatorMatrix H = nq * cplx(delta_q) - (na * nq) * cplx(rig.chi) + (a + a.adjoint()) * cplx(omega_a) +
                     (q + q.adjoint()) * cplx(rig.omega_q);
  H.mark_hermitian();
  ModelSpec s{H, {a * std::sqrt(rig.kappa_a()), q * std::sqrt(rig.kappa_1())}};
  if (rig.kappa_phi() > 0.0) s.collapse_ops.push_back(nq * std::sqrt(rig.kappa_phi()));
  return s;
}

namespace {

struct RigPoint {
  cplx a;
  double pq;
  double nbar;
};

RigPoint rig_point(const EfficiencyRigSpec& rig, double omega_a, double delta_q, int dim) {
  auto spec = rig_model(rig, omega_a, delta_q, dim);
  SteadyStateOptions so;
  so.check_kernel = false;
  auto rho = steady_state(build_liouvillian(spec), so);
  const Dims& dims = spec.dims();
  return {expect(embed(annihilation(dim), dims, 0), rho), expect(embed(number(rig.qubit_dim), dims, 1), rho).real(),
          expect(embed(number(dim), dims, 0), rho).real()};
}

}  // namespace

NumberSplitSurface qubit_numbersplit(const EfficiencyRigSpec& rig) {
  rig.validate();
  if (rig.omega_a.empty() || rig.delta_q.empty()) throw Error(ErrorKind::InvalidArgument, "empty drive or detuning grid");
  NumberSplitSurface s;
  s.delta_q = rig.delta_q;
  s.omega_a = rig.omega_a;
  double wmax = 0.0;
  for (double w : rig.omega_a) wmax = std::max(wmax, std::abs(w));
  s.mem_dim = rig_mem_dim(rig, wmax);
  const int nr = int(rig.omega_a.size()), nc = int(rig.delta_q.size());
  s.a.resize(nr, nc);
  s.qubit_excitation.resize(nr, nc);
  s.nbar.resize(nr, nc);
  parallel_for(nr * nc, [&](int k) {
    int i = k / nc, j = k % nc;
    auto p = rig_point(rig, rig.omega_a[i], rig.delta_q[j], s.mem_dim);
    s.a(i, j) = p.a;
    s.qubit_excitation(i, j) = p.pq;
    s.nbar(i, j) = p.nbar;
  });
  return s;
}

std::vector<double> numbersplit_peaks(const NumberSplitSurface& s, int row, double min_height) {
  std::vector<double> out;
  const auto& p = s.qubit_excitation;
  for (int j = 1; j + 1 < p.cols(); ++j)
    if (p(row, j) > p(row, j - 1) && p(row, j) >= p(row, j + 1) && p(row, j) > min_height) out.push_back(s.delta_q[j]);
  return out;
}

RigFit fit_rig(const EfficiencyRigSpec& rig, const RigData& data, double nbar_lo, double nbar_hi) {
  rig.validate();
  const int nr = int(data.s_in.size()), nc = int(data.delta_q.size());
  if (nr == 0 || nc < 3) throw Error(ErrorKind::InvalidArgument, "rig data needs drives and at least 3 detunings");
  if (data.s_t.rows() != nr || data.s_t.cols() != nc) throw Error(ErrorKind::DimensionMismatch, "s_t shape mismatch");
  if (!(nbar_lo > 0.0) || !(nbar_hi > nbar_lo)) throw Error(ErrorKind::InvalidArgument, "bad photon number search range");

  int top = int(std::max_element(data.s_in.begin(), data.s_in.end(), [](double x, double y) {
                  return std::abs(x) < std::abs(y);
                }) - data.s_in.begin());
  const double s_max = std::abs(data.s_in[top]);
  if (!(s_max > 0.0)) throw Error(ErrorKind::InvalidArgument, "all drives are zero");
  const double ka = rig.kappa_a();
  auto omega_for = [&](double nbar) { return 0.5 * ka * std::sqrt(nbar); };

  EfficiencyRigSpec r = rig;
  cplx A_best;
  auto resid = [&](double lnb, cplx* A_out) {
    double w = omega_for(std::exp(lnb));
    int dim = rig_mem_dim(rig, w);
    std::vector<cplx> m(nc);
    parallel_for(nc, [&](int j) { m[j] = rig_point(r, w, data.delta_q[j], dim).a; });
    cplx num = 0.0;
    double den = 0.0;
    for (int j = 0; j < nc; ++j) {
      num += std::conj(m[j]) * data.s_t(top, j);
      den += std::norm(m[j]);
    }
    cplx A = num / den;
    double s = 0.0;
    for (int j = 0; j < nc; ++j) s += std::norm(data.s_t(top, j) - A * m[j]);
    if (A_out) *A_out = A;
    return s;
  };

  const int grid = 8;
  double best_l = 0.0, best_v = std::numeric_limits<double>::infinity();
  const double l0 = std::log(nbar_lo), l1 = std::log(nbar_hi), step = (l1 - l0) / (grid - 1);
  for (int k = 0; k < grid; ++k) {
    double v = resid(l0 + k * step, nullptr);
    if (v < best_v) {
      best_v = v;
      best_l = l0 + k * step;
    }
  }
  std::uintmax_t iters = 60;
  auto opt = boost::math::tools::brent_find_minima([&](double l) { return resid(l, nullptr); },
                                                   std::max(l0, best_l - step), std::min(l1, best_l + step), 18, iters);
  RigFit f;
  f.residual = resid(opt.first, &A_best);
  f.A = A_best;
  f.drive_scale = omega_for(std::exp(opt.first)) / s_max;
  f.nbar.resize(nr);

  // photon numbers with the qubit left undriven
  r.omega_q = 0.0;
  parallel_for(nr, [&](int i) {
    double w = f.drive_scale * data.s_in[i];
    f.nbar[i] = rig_point(r, w, data.delta_q.front(), rig_mem_dim(rig, std::abs(w))).nbar;
  });
  return f;
}

}  // namespace catsim
