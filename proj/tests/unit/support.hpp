#pragma once

#include "hvf/core.hpp"

#include <cmath>
#include <initializer_list>
#include <random>
#include <vector>

namespace hvf::testing {

inline Point pt(std::initializer_list<double> v) {
  Point p(static_cast<int>(v.size()));
  int i = 0;
  for (double d : v) p[i++] = d;
  return p;
}

inline Point random_point(std::mt19937_64& rng, const Box& b) {
  Point x(b.dim());
  for (int i = 0; i < b.dim(); ++i) x[i] = std::uniform_real_distribution<double>(b.lo[i], b.hi[i])(rng);
  return x;
}

// Least-squares slope of log(ys) against log(xs).
inline double slope(const std::vector<double>& xs, const std::vector<double>& ys) {
  double mx = 0, my = 0;
  for (size_t i = 0; i < xs.size(); ++i) {
    mx += std::log(xs[i]);
    my += std::log(ys[i]);
  }
  mx /= xs.size();
  my /= ys.size();
  double sxy = 0, sxx = 0;
  for (size_t i = 0; i < xs.size(); ++i) {
    sxy += (std::log(xs[i]) - mx) * (std::log(ys[i]) - my);
    sxx += (std::log(xs[i]) - mx) * (std::log(xs[i]) - mx);
  }
  return sxy / sxx;
}

}  // namespace hvf::testing
