#include "hvf/core.hpp"

#include <cstdio>

namespace hvf {

bool Box::contains(const Point& x, double slack) const {
  if (x.size() != lo.size()) return false;
  for (int i = 0; i < x.size(); ++i) {
    if (!(x[i] >= lo[i] - slack && x[i] <= hi[i] + slack)) return false;
  }
  return true;
}

double Box::distance_to_boundary(const Point& x) const {
  double d = std::numeric_limits<double>::infinity();
  for (int i = 0; i < x.size(); ++i) d = std::min({d, x[i] - lo[i], hi[i] - x[i]});
  return std::max(d, 0.0);
}

Box Box::cube(int dim, double half_width) {
  return {Point::Constant(dim, -half_width), Point::Constant(dim, half_width)};
}

std::string format_point(const Point& x) {
  std::string s = "(";
  char buf[32];
  for (int i = 0; i < x.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.6g", x[i]);
    if (i) s += ", ";
    s += buf;
  }
  return s + ")";
}

}  // namespace hvf
