#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <vector>

#include <Eigen/Dense>

#include "catsim/error.hpp"

namespace catsim {

struct OdeOptions {
  double rtol = 1e-8;
  double atol = 1e-10;
  double h0 = 0.0;  // 0: pick automatically
  double h_max = 0.0;  // 0: unbounded
  long max_steps = 50'000'000;
};

struct OdeStats {
  long accepted = 0;
  long rejected = 0;
};

// Dormand-Prince 5(4) with PI-free standard step control. The callback
// observe(k, y) is invoked for every requested output time t_out[k].
template <class Vec>
OdeStats integrate_dp45(const std::function<void(double, const Vec&, Vec&)>& f, Vec y,
                        const std::vector<double>& t_out,
                        const std::function<void(int, const Vec&)>& observe,
                        const OdeOptions& opt = {}) {
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                          a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                          a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                          b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                          e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

  OdeStats stats;
  if (t_out.empty()) return stats;
  for (std::size_t k = 1; k < t_out.size(); ++k)
    if (!(t_out[k] > t_out[k - 1]))
      throw Error(ErrorKind::InvalidArgument, "output times must be strictly increasing");

  double t = t_out.front();
  observe(0, y);
  if (t_out.size() == 1) return stats;

  Vec k1(y.size()), k2(y.size()), k3(y.size()), k4(y.size()), k5(y.size()), k6(y.size()),
      k7(y.size()), ytmp(y.size()), ynew(y.size());
  f(t, y, k1);

  auto err_norm = [&](const Vec& yn, const Vec& errv) {
    double e = 0.0;
    for (Eigen::Index i = 0; i < yn.size(); ++i) {
      double sc = opt.atol + opt.rtol * std::max(std::abs(y[i]), std::abs(yn[i]));
      e = std::max(e, std::abs(errv[i]) / sc);
    }
    return e;
  };

  double span = t_out.back() - t;
  double h = opt.h0;
  if (h <= 0.0) {
    double d0 = y.cwiseAbs().maxCoeff(), d1 = k1.cwiseAbs().maxCoeff();
    h = (d0 < 1e-10 || d1 < 1e-10) ? 1e-6 * span : 0.01 * d0 / d1;
    h = std::min(h, span);
  }
  if (opt.h_max > 0) h = std::min(h, opt.h_max);

  std::size_t next = 1;
  while (next < t_out.size()) {
    double target = t_out[next];
    bool hit = false;
    double h_free = h;
    if (t + h >= target) {
      h = target - t;
      hit = true;
    }
    if (h < 1e-14 * std::max(1.0, std::abs(t)) || stats.accepted + stats.rejected > opt.max_steps) {
      std::ostringstream os;
      os << "step size collapsed to " << h << " at t=" << t << " after " << stats.accepted
         << " accepted / " << stats.rejected << " rejected steps";
      throw Error(ErrorKind::Stiffness, os.str());
    }
    ytmp = y + h * (a21 * k1);
    f(t + c2 * h, ytmp, k2);
    ytmp = y + h * (a31 * k1 + a32 * k2);
    f(t + c3 * h, ytmp, k3);
    ytmp = y + h * (a41 * k1 + a42 * k2 + a43 * k3);
    f(t + c4 * h, ytmp, k4);
    ytmp = y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
    f(t + c5 * h, ytmp, k5);
    ytmp = y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
    f(t + h, ytmp, k6);
    ynew = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    f(t + h, ynew, k7);
    ytmp = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    double err = err_norm(ynew, ytmp);
    if (!std::isfinite(err)) err = 1e10;

    if (err <= 1.0) {
      ++stats.accepted;
      t = hit ? target : t + h;
      y.swap(ynew);
      k1.swap(k7);
      if (hit) {
        observe(int(next), y);
        ++next;
      }
    } else {
      ++stats.rejected;
    }
    double fac = err == 0.0 ? 5.0 : 0.9 * std::pow(err, -0.2);
    fac = std::clamp(fac, 0.2, 5.0);
    if (err > 1.0) fac = std::min(fac, 1.0);
    double h_new = h * fac;
    if (hit && err <= 1.0) h_new = std::max(h_new, h_free);
    h = h_new;
    if (opt.h_max > 0) h = std::min(h, opt.h_max);
  }
  return stats;
}

}  // namespace catsim
