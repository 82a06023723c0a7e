#pragma once

#include "hvf/metric.hpp"

#include <string>
#include <vector>

namespace hvf {

// u together with its symbolic gradient, compiled for repeated evaluation.
class GradientEvaluator {
 public:
  // Throws SmoothnessError unless u is declared at least C^1.
  GradientEvaluator(const VectorFieldSystem& sys, const TestFunctionDef& u);

  double value(const Point& x) const { return u_(x); }
  Point gradient(const Point& x) const;
  // (X_1 u, ..., X_n u) at x.
  Point x_gradient(const Point& x) const;
  // Same for another system with the same field indices.
  Point x_gradient(const VectorFieldSystem& other, const Point& x) const;

 private:
  const VectorFieldSystem& sys_;
  CompiledExpr u_;
  std::vector<CompiledExpr> du_;
  std::vector<int> fields_;  // generator indices, drift excluded
};

Point x_gradient(const VectorFieldSystem& sys, const TestFunctionDef& u, const Point& x);

struct IntegralOptions {
  long samples = 200000;
  uint64_t seed = 1;
  int workers = 1;
  Resolution res;
};

struct InequalityReport {
  std::string operation;
  Point x0;
  double rho = 0.0;
  double lambda = 1.0;
  double p = 1.0;
  Flavor flavor = Flavor::D1;
  double lhs = 0.0;
  double rhs = 0.0;              // core, without the unknown constant
  double implied_constant = 0.0; // lhs / rhs, 0 when lhs vanishes
  double ball_volume = 0.0;      // |B| from the matched samples
  long samples = 0;
  long inside = 0;               // samples in B
  double resolution = 0.0;       // cost slack of the membership oracle
};

struct RoughPoincareReport;

// Stratified membership sample for B = B1(x0, rho) and lambda B, drawn once
// and shared by every integrand: half the budget is uniform on a box around
// B, half on the box of lambda B with the first box cut out.
class BallIntegrator {
 public:
  BallIntegrator(const VectorFieldSystem& sys, const Point& x0, double rho, double lambda = 2.0,
                 const IntegralOptions& opt = {});

  // LHS over B, RHS core over lambda B.
  InequalityReport poincare(const TestFunctionDef& u) const;
  // Both sides over B with p-th power means; reported with lambda = 1.
  InequalityReport p_poincare(const TestFunctionDef& u, double p) const;
  // Requires lambda rho within the Taylor validity radius at x0.
  RoughPoincareReport rough(const TestFunctionDef& u) const;

  const BallOracle& oracle() const { return oracle_; }
  double rho() const { return rho_; }
  double lambda() const { return lambda_; }

 private:
  InequalityReport mean_oscillation(const TestFunctionDef& u, double p, bool same_ball) const;

  const VectorFieldSystem& sys_;
  Point x0_;
  double rho_;
  double lambda_;
  IntegralOptions opt_;
  BallOracle oracle_;
  std::vector<Point> points_;
  std::vector<double> cost_;
  std::vector<double> weight_;  // box volume carried by each point
};

// LHS = int_B |u - u_B|, RHS core = rho int_{lambda B} |Xu| over one shared
// sample of the bounding box of lambda B.
InequalityReport poincare_ratio(const VectorFieldSystem& sys, const TestFunctionDef& u, const Point& x0, double rho,
                                double lambda = 2.0, const IntegralOptions& opt = {});
// LHS = (int_B |u - u_B|^p)^{1/p}, RHS core = rho (int_B |Xu|^p)^{1/p}.
InequalityReport p_poincare_ratio(const VectorFieldSystem& sys, const TestFunctionDef& u, const Point& x0, double rho,
                                  double p, const IntegralOptions& opt = {});

struct SobolevRow {
  double rho;
  double volume;
  std::vector<double> ratio;  // one per exponent of the grid
};
struct SobolevResult {
  std::vector<double> k_grid;
  std::vector<double> slope;   // log-log slope of the ratio against rho, per k
  std::vector<SobolevRow> rows;
  double k = 0.0;              // largest admissible grid exponent, 0 if none
  double cap = 10.0;
  double slope_tolerance = 0.02;
  double p = 1.0;
};
struct SobolevOptions {
  int levels = 4;                 // radii rho, 2 rho, ..., 2^{levels-1} rho
  int grid_per_side = 0;          // quadrature nodes per axis; 0 picks from the budget
  long budget = 200000;
  double cap = 10.0;
  double slope_tolerance = 0.02;
  Resolution res;
};
// phi must carry a support box |x_j| <= R_j outside which it vanishes,
// and the support must lie in B(x0, rho). Ratio for exponent k:
// (mean_B |phi|^{kp})^{1/(kp)} / (rho (mean_B |X phi|^p)^{1/p}).
SobolevResult sobolev_exponent(const VectorFieldSystem& sys, const TestFunctionDef& phi, const Point& x0, double rho,
                               double p = 1.0, const SobolevOptions& opt = {});
// Checks that phi and its gradient vanish on the boundary of its support cube.
void check_support(const VectorFieldSystem& sys, const TestFunctionDef& phi, int per_side = 41);

struct LagrangeReport {
  Point x0;
  Point x;
  double rho = 0.0;
  double rho_hat = 0.0;   // control bound of the connecting path
  double lhs = 0.0;       // |f(x) - f(x0)|
  double rhs = 0.0;       // sqrt(n) rho_hat int_0^1 |Xf(gamma)|
  double slack = 1e-3;    // relative
  int segments = 0;
  bool holds = false;
};
LagrangeReport lagrange_check(const VectorFieldSystem& sys, const TestFunctionDef& f, const Point& x0, double rho,
                              const Point& x, const ConnectOptions& copt = {});

struct RoughPoincareReport {
  Point x0;
  double rho = 0.0;
  double lambda = 2.0;
  double lhs = 0.0;             // int_B |u - u_B|
  double x_term = 0.0;          // rho int_{lambda B} |S u|
  double remainder_term = 0.0;  // rho int_{lambda B} |(X - S) u|
  double gradient_term = 0.0;   // int_{lambda B} |grad u|
  double coefficient = 0.0;     // remainder_term / (rho^r gradient_term)
  long samples = 0;
};
RoughPoincareReport rough_poincare_decomposition(const VectorFieldSystem& sys, const TestFunctionDef& u, const Point& x0,
                                                 double rho, double lambda = 2.0, const IntegralOptions& opt = {});

}  // namespace hvf
