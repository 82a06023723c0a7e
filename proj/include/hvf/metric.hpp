#pragma once

#include "hvf/flows.hpp"
#include "hvf/graph.hpp"

#include <memory>
#include <string>
#include <vector>

namespace hvf {

// d: commutator moves with rates delta^{|I|}; d1: base fields only.
enum class Flavor { D, D1 };
std::string to_string(Flavor f);

struct Resolution {
  int steps = 16;          // scale / tau
  int time_steps = 8;      // moves per unit time in d searches and time-flavor balls
  int directions = 16;     // sampled unit controls besides the signed axes
  double kappa = 0.5;      // cell edge relative to one step
  long max_cells = 4000000;
  double tau = 0.0;        // explicit step; 0 derives it from steps
  double scale = 0.0;      // explicit distance scale (cell geometry); 0 derives it from the pair or radius
};

// ---------------------------------------------------------------- paths

struct AdmissiblePath {
  Point start;
  Point end;
  FactorList segments;      // base-field exponential factors, applied from start
  double bound = 0.0;       // delta of the unit-time schedule realizing the segments
  int charts = 0;           // chart pieces chained together
  int segment_limit = 0;    // exponential factors implied by those charts
};

// Smallest delta with sum_k |t_k| delta^{-w_k} <= 1 (w = 2 for the drift).
double factor_bound(const FactorList& factors);
// Unit-time schedule: factor k runs on an interval of length |t_k| delta^{-w_k}.
ControlSchedule path_schedule(const AdmissiblePath& path);
Point reintegrate(const VectorFieldSystem& sys, const AdmissiblePath& path, const FlowOptions& opt = {});

struct ConnectOptions {
  int max_depth = 32;
  FlowOptions flow;
};
AdmissiblePath connect(const VectorFieldSystem& sys, const Point& x, const Point& y, const ConnectOptions& opt = {});

struct SubunitSegment {
  int field;
  double sign;    // control a_field = sign on [begin, end]
  double begin;
  double end;
};
struct SubunitPath {
  Point start;
  std::vector<SubunitSegment> segments;
  double hitting_time = 0.0;
};
SubunitPath subunit_reparametrize(const AdmissiblePath& path);
Point integrate_subunit(const VectorFieldSystem& sys, const SubunitPath& path, const FlowOptions& opt = {});

// ---------------------------------------------------------------- distances

struct DistanceEstimate {
  double lower = 0.0;
  double upper = 0.0;
  std::string lower_method;
  std::string upper_method;
  AdmissiblePath witness;
};

struct UpperOptions {
  bool refine = true;
  int max_depth = 12;
  FlowOptions flow;
};
DistanceEstimate d1_upper(const VectorFieldSystem& sys, const Point& x, const Point& y, const UpperOptions& opt = {});

struct GraphDistance {
  double value = 0.0;
  double tau = 0.0;     // step of the final search (time units for d)
  double scale = 0.0;
  long cells = 0;
  int searches = 0;
};
GraphDistance d1_graph(const VectorFieldSystem& sys, const Point& x, const Point& y, const Resolution& res = {});
GraphDistance d_graph(const VectorFieldSystem& sys, const Point& x, const Point& y, const Resolution& res = {});

struct EuclidConstants {
  double K;    // sup over the grid of sum_I |X_[I]|
  double c0;   // inf over the grid of max_eta lambda_min(Gram_eta)
  int grid_points;
};
// Grid sample of the working box; cached per system.
EuclidConstants euclid_constants(const VectorFieldSystem& sys);

struct EuclidBracket {
  double lower;
  double upper;
  EuclidConstants constants;
};
EuclidBracket euclid_bracket(const VectorFieldSystem& sys, const Point& x, const Point& y);

// ---------------------------------------------------------------- balls

// Flood-fill reachability from x0. For d1 (drift-free) cost(y) estimates the
// distance from x0; otherwise it is the time needed at delta = radius, and the
// ball is {cost <= 1}.
class BallOracle {
 public:
  BallOracle(const VectorFieldSystem& sys, const Point& x0, double radius, Flavor flavor, const Resolution& res = {});

  double cost(const Point& y) const;
  double threshold() const { return time_flavor_ ? 1.0 : radius_; }
  bool contains(const Point& y) const { return cost(y) <= threshold(); }
  // Ball of a smaller radius from the same flood; distance flavor only.
  bool contains_within(const Point& y, double rho) const;
  bool distance_flavor() const { return !time_flavor_; }

  Box bounding_box() const;
  // Box around the settled cells with cost <= within, padded by one move.
  Box bounding_box(double within) const;
  double cell_volume() const { return cell_volume_; }
  double slack() const { return slack_; }  // cost span of half a cell
  const ControlGraph& graph() const { return *graph_; }
  const Point& center() const { return x0_; }
  double radius() const { return radius_; }
  // Settled cells and every cell within one move of them.
  std::vector<CellKey> candidate_cells() const;

 private:
  Point x0_;
  double radius_;
  bool time_flavor_;
  std::unique_ptr<ControlGraph> graph_;
  std::vector<int> weight_;
  std::vector<double> factor_;
  double delta_ = 1.0;
  double cell_volume_ = 0.0;
  double slack_ = 0.0;
  int reach_ = 1;  // neighbor radius in cells covering one move
  std::vector<CellKey> offsets_;
  std::vector<double> inv_scale_;  // time flavor: delta^{-w_j}
};

enum class BallMethod { FloodFill, Sampling };

struct BallEstimate {
  Point center;
  double radius = 0.0;
  Flavor flavor = Flavor::D1;
  double volume = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  long samples = 0;        // cells examined or points drawn
  std::string method;
  double resolution = 0.0; // cost slack of one cell
};

struct BallOptions {
  BallMethod method = BallMethod::FloodFill;
  long budget = 200000;    // samples for the sampling method
  uint64_t seed = 1;
  double ci_target = 0.0;  // relative CI half-width demanded from sampling, 0 for none
  Resolution res;
};
BallEstimate ball_volume(const VectorFieldSystem& sys, const Point& x0, double rho, Flavor flavor,
                         const BallOptions& opt = {});
BallEstimate volume_from_oracle(const BallOracle& oracle, Flavor flavor, const BallOptions& opt = {});

double volume_formula_denominator(const VectorFieldSystem& sys, const Point& x0, double rho);
double volume_formula_ratio(const VectorFieldSystem& sys, const Point& x0, double rho, Flavor flavor,
                            const BallOptions& opt = {});

struct InclusionReport {
  double rho;
  double c1;      // B_S(c1 rho) inside B_X(rho)
  double c2;      // B_X(rho) inside B_S(c2 rho)
  double slack;   // relative resolution of both estimates
  long cells;
};
InclusionReport ball_inclusion_check(const VectorFieldSystem& sys, const Point& x0, double rho, const Resolution& res = {});

// min(chart neighborhood, Taylor validity radius, 0.25 dist(x0, boundary of the working box)).
double certified_radius(const VectorFieldSystem& sys, const Point& x0);

struct EquivalenceStats {
  std::vector<double> d;
  std::vector<double> d1;
  std::vector<double> ratio;   // d1 / d, NaN for skipped pairs
  double max_ratio = 0.0;
  int skipped = 0;
  int order_violations = 0;    // pairs with d > d1 + slack
};
EquivalenceStats distance_equivalence_ratio(const VectorFieldSystem& sys, const std::vector<std::pair<Point, Point>>& pairs,
                                            const Resolution& res = {});

}  // namespace hvf
