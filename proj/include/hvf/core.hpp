#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace hvf {

// Up to 16 coordinates, matching the variable names x1..x16.
inline constexpr int kMaxDim = 16;

using Point = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDim, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim, kMaxDim>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& msg, int line, int column)
      : Error(msg + " at line " + std::to_string(line) + ", column " + std::to_string(column)),
        line_(line),
        column_(column) {}
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

class DomainError : public Error {
 public:
  using Error::Error;
};
class SmoothnessError : public Error {
 public:
  using Error::Error;
};
class RankError : public Error {
 public:
  using Error::Error;
};
class IntegrationError : public Error {
 public:
  using Error::Error;
};
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& msg, double residual = 0.0) : Error(msg), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};
class BudgetError : public Error {
 public:
  using Error::Error;
};
class HypothesisError : public Error {
 public:
  using Error::Error;
};

// Axis-aligned box [lo_1,hi_1] x ... x [lo_p,hi_p].
struct Box {
  Point lo;
  Point hi;

  int dim() const { return static_cast<int>(lo.size()); }
  bool contains(const Point& x, double slack = 0.0) const;
  double distance_to_boundary(const Point& x) const;
  Point center() const { return 0.5 * (lo + hi); }
  static Box cube(int dim, double half_width);
};

std::string format_point(const Point& x);

}  // namespace hvf
