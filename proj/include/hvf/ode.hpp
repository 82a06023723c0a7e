#pragma once

#include "hvf/core.hpp"

#include <cmath>
#include <vector>

namespace hvf {

struct OdeOptions {
  double abs_tol = 1e-10;
  double rel_tol = 1e-10;
  int max_steps = 200000;
  const Box* domain = nullptr;  // abort when the solution leaves it
  bool record_steps = false;
  bool record_points = false;
};

struct OdeResult {
  Point end;
  int accepted = 0;
  int rejected = 0;
  std::vector<double> steps;   // accepted step sizes, if recorded
  std::vector<double> times;   // time after each accepted step, if recorded
  std::vector<Point> points;   // state after each accepted step, if recorded
};

// Dormand-Prince 5(4) with local extrapolation for x' = f(x) on [0, T].
// T may be negative.
template <class F>
OdeResult integrate_dp45(F&& f, const Point& x0, double T, const OdeOptions& opt) {
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                          a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                          e6 = 22.0 / 525, e7 = -1.0 / 40;
  (void)c2, (void)c3, (void)c4, (void)c5;

  OdeResult res;
  res.end = x0;
  if (T == 0.0) return res;
  const int n = static_cast<int>(x0.size());
  const double dir = T > 0 ? 1.0 : -1.0;
  const double span = std::fabs(T);
  Point x = x0, k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), y(n), tmp(n), err(n);
  f(x, k1);
  double t = 0.0;
  double h = span;
  bool fsal_valid = true;
  while (t < span) {
    if (res.accepted + res.rejected >= opt.max_steps) throw IntegrationError("step budget exhausted");
    if (t + h > span) h = span - t;
    if (h <= span * 1e-15) {
      // Remaining interval below resolution.
      break;
    }
    const double hs = dir * h;
    if (!fsal_valid) f(x, k1);
    tmp = x + hs * a21 * k1;
    f(tmp, k2);
    tmp = x + hs * (a31 * k1 + a32 * k2);
    f(tmp, k3);
    tmp = x + hs * (a41 * k1 + a42 * k2 + a43 * k3);
    f(tmp, k4);
    tmp = x + hs * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
    f(tmp, k5);
    tmp = x + hs * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
    f(tmp, k6);
    y = x + hs * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    f(y, k7);
    err = hs * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    double en = 0.0;
    for (int i = 0; i < n; ++i) {
      double sc = opt.abs_tol + opt.rel_tol * std::max(std::fabs(x[i]), std::fabs(y[i]));
      en = std::max(en, std::fabs(err[i]) / sc);
    }
    if (!std::isfinite(en)) throw IntegrationError("non-finite state during integration");
    if (en <= 1.0) {
      t += h;
      x = y;
      k1 = k7;
      fsal_valid = true;
      ++res.accepted;
      if (opt.record_steps) res.steps.push_back(h);
      if (opt.record_points) {
        res.times.push_back(dir * t);
        res.points.push_back(x);
      }
      if (opt.domain && !opt.domain->contains(x)) {
        throw DomainError("trajectory leaves the domain at " + format_point(x));
      }
      double fac = en == 0.0 ? 5.0 : std::min(5.0, std::max(0.2, 0.9 * std::pow(en, -0.2)));
      h *= fac;
    } else {
      ++res.rejected;
      fsal_valid = true;  // k1 still belongs to x
      h *= std::max(0.2, 0.9 * std::pow(en, -0.25));
    }
  }
  res.end = x;
  return res;
}

// Re-runs the accepted step sequence with every step split in two and returns
// the endpoint difference, an a posteriori estimate of the global error.
template <class F>
double step_halving_error(F&& f, const Point& x0, double T, const std::vector<double>& steps) {
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                          a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  const int n = static_cast<int>(x0.size());
  const double dir = T > 0 ? 1.0 : -1.0;
  Point k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), tmp(n);
  auto step = [&](Point& x, double hs) {
    f(x, k1);
    tmp = x + hs * a21 * k1;
    f(tmp, k2);
    tmp = x + hs * (a31 * k1 + a32 * k2);
    f(tmp, k3);
    tmp = x + hs * (a41 * k1 + a42 * k2 + a43 * k3);
    f(tmp, k4);
    tmp = x + hs * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
    f(tmp, k5);
    tmp = x + hs * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
    f(tmp, k6);
    x = x + hs * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
  };
  Point coarse = x0, fine = x0;
  for (double h : steps) {
    step(coarse, dir * h);
    step(fine, dir * h / 2);
    step(fine, dir * h / 2);
  }
  return (coarse - fine).norm();
}

}  // namespace hvf
