#pragma once

#include "hvf/fields.hpp"
#include "hvf/ode.hpp"

#include <ostream>
#include <span>
#include <vector>

namespace hvf {

struct FlowOptions {
  double tol = 1e-10;
  int max_steps = 200000;
  bool certify = false;  // a posteriori step-halving check, error if above 10*tol
};

// exp(time * X_field); factor lists are in application order.
struct FlowFactor {
  int field;
  double time;
};
using FactorList = std::vector<FlowFactor>;

Point exp_map(const VectorFieldSystem& sys, int field, double t, const Point& x, const FlowOptions& opt = {});

struct CertifiedPoint {
  Point end;
  double error_estimate;
  int steps;
};
CertifiedPoint exp_map_certified(const VectorFieldSystem& sys, int field, double t, const Point& x, const FlowOptions& opt = {});

Point apply_factors(const VectorFieldSystem& sys, const FactorList& factors, const Point& x, const FlowOptions& opt = {});
FactorList inverse_factors(const FactorList& factors);

// Nested group commutator with one time per slot.
FactorList generalized_quasi_exp_factors(const MultiIndex& I, std::span<const double> times);
// C_l(t): slot k gets t^{p_{i_k}}.
FactorList quasi_exp_factors(const MultiIndex& I, double t);
// E_I(t) = C_l(t^{1/|I|}) for t >= 0, the inverse of C_l(|t|^{1/|I|}) for t < 0.
FactorList e_map_factors(const MultiIndex& I, double t);
int factor_count(int length);

Point quasi_exp(const VectorFieldSystem& sys, const MultiIndex& I, double t, const Point& x, const FlowOptions& opt = {});
Point e_map(const VectorFieldSystem& sys, const MultiIndex& I, double t, const Point& x, const FlowOptions& opt = {});

// |C_l(t)x - x - t^{|I|} X_[I](x)| / t^{|I|}
double expansion_residual(const VectorFieldSystem& sys, const MultiIndex& I, const Point& x, double t, const FlowOptions& opt = {});

struct MixedDerivativeReport {
  Point lhs;  // d^2 F / dt ds at (0, 0, x)
  Point rhs;  // (d^2A/dx dt)(dB/ds) - (d^2B/ds dx)(dA/dt)
  double residual;
};
// F(t,s,x) = A^{-1}(t, B^{-1}(s, A(t, B(s,x)))) with A = exp(t X_i), B = exp(s X_j).
MixedDerivativeReport mixed_derivative_check(const VectorFieldSystem& sys, int i, int j, const Point& x, double step = 1e-4,
                                             const FlowOptions& opt = {});

// ---------------------------------------------------------------- charts

struct ChartData {
  const VectorFieldSystem* sys = nullptr;
  Point x;
  BasisFamily eta;
  Mat jacobian;        // columns X_[I_j](x)
  double radius = 0;   // neighborhood of x where inversion is attempted
  FlowOptions flow;

  double norm(const Point& h) const;  // max |h_j|^{1/|I_j|}
};

ChartData make_chart(const VectorFieldSystem& sys, const Point& x, const BasisFamily& eta, double radius = 0.0,
                     const FlowOptions& flow = {});
// E_{I_p}(h_p) is applied first, E_{I_1}(h_1) last.
FactorList chart_factors(const ChartData& cd, const Point& h);
Point chart_forward(const ChartData& cd, const Point& h);

struct NewtonStats {
  int iterations = 0;
  double residual = 0.0;
};
Point chart_inverse(const ChartData& cd, const Point& y, NewtonStats* stats = nullptr);

// ---------------------------------------------------------------- admissible controls

enum class ControlNorm { Euclidean, Box };

struct ControlTerm {
  MultiIndex index;
  double coeff;
};
struct ControlPiece {
  double begin;
  double end;
  std::vector<ControlTerm> terms;
};
struct ControlSchedule {
  std::vector<ControlPiece> pieces;
  ControlNorm norm = ControlNorm::Euclidean;
};

// Smallest delta with the piece admissible: |a_I| <= delta^{|I|} (box) or
// sum (a_I / delta^{|I|})^2 <= 1 (euclidean).
double piece_bound(const ControlPiece& piece, ControlNorm norm);
double schedule_bound(const ControlSchedule& s);

struct TrajectorySample {
  double s;
  Point x;
  int piece;
};
struct Trajectory {
  std::vector<TrajectorySample> samples;
  Point end;
  double bound = 0.0;
};

Trajectory admissible_solve(const VectorFieldSystem& sys, const ControlSchedule& schedule, const Point& x0,
                            const FlowOptions& opt = {});
void write_trajectory_csv(std::ostream& out, const Trajectory& traj);

}  // namespace hvf
