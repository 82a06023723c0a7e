#include "hvf/metric.hpp"

#include "hvf/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <unordered_set>

namespace hvf {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

int field_weight(int field) { return VectorFieldSystem::weight(field); }

// Cost constant c_w in the local estimate c_w |h|^{1/w} of a displacement h
// along a weight-w direction. Optimal loops give sqrt(4 pi) = 3.54 for the
// heisenberg bracket and 4.01 for the martinet (1,1,2) bracket.
double weight_factor(const MultiIndex& I) { return I.weight() == 1 ? 1.0 : 4.0; }

// Deterministic unit control directions in R^n, component k scaled by
// speed[k]. n = 2: an even ring; n >= 3: signed axes, an even ring in every
// coordinate plane, and extra/2 fixed-seed random directions.
std::vector<Point> unit_controls(int n, int extra, const std::vector<double>& speed) {
  std::vector<Point> dirs;
  auto ring = [&](int k, int l, int m, bool axes) {
    for (int i = 0; i < m; ++i) {
      if (!axes && i % (m / 4) == 0) continue;
      double a = 2 * M_PI * i / m;
      Point d = Point::Zero(n);
      d[k] = std::cos(a);
      d[l] = std::sin(a);
      if (std::fabs(d[k]) < 1e-15) d[k] = 0;
      if (std::fabs(d[l]) < 1e-15) d[l] = 0;
      dirs.push_back(d);
    }
  };
  if (n == 1) {
    dirs.push_back(Point::Constant(1, 1.0));
    dirs.push_back(Point::Constant(1, -1.0));
  } else if (n == 2) {
    ring(0, 1, 4 * ((4 + extra + 3) / 4), true);
  } else {
    for (int k = 0; k < n; ++k) {
      for (double s : {1.0, -1.0}) {
        Point d = Point::Zero(n);
        d[k] = s;
        dirs.push_back(d);
      }
    }
    for (int k = 0; k < n; ++k) {
      for (int l = k + 1; l < n; ++l) ring(k, l, 12, false);
    }
    std::mt19937_64 g(0x5eedull + static_cast<uint64_t>(n));
    std::normal_distribution<double> nd;
    for (int k = 0; k < extra / 2; ++k) {
      Point d(n);
      for (int j = 0; j < n; ++j) d[j] = nd(g);
      dirs.push_back(d / d.norm());
    }
  }
  for (auto& d : dirs) {
    for (int k = 0; k < n; ++k) d[k] *= speed[k];
  }
  return dirs;
}

// Cheapest local move estimate from a displacement in a fixed frame.
struct LocalCost {
  Mat inv;
  std::vector<int> weight;
  std::vector<double> factor;
  bool time_flavor = false;
  double delta = 1.0;

  double operator()(const Point& dz) const {
    Point h = inv * dz;
    if (time_flavor) {
      double s = 0.0;
      for (int j = 0; j < h.size(); ++j) {
        double q = h[j] / std::pow(delta, weight[j]);
        s += q * q;
      }
      return std::sqrt(s);
    }
    double lin = 0.0, rest = 0.0;
    for (int j = 0; j < h.size(); ++j) {
      if (weight[j] == 1) {
        lin += h[j] * h[j];
      } else {
        rest += factor[j] * std::pow(std::fabs(h[j]), 1.0 / weight[j]);
      }
    }
    return std::sqrt(lin) + rest;
  }
};

LocalCost local_cost(const VectorFieldSystem& sys, const Point& at, const BasisFamily& eta, bool time_flavor, double delta) {
  LocalCost lc;
  Mat B = basis_matrix(sys, eta, at);
  Eigen::FullPivLU<Mat> lu(B);
  if (!lu.isInvertible()) throw RankError("singular frame " + eta.to_string() + " at " + format_point(at));
  lc.inv = lu.inverse();
  for (const auto& I : eta.members) {
    lc.weight.push_back(I.weight());
    lc.factor.push_back(weight_factor(I));
  }
  lc.time_flavor = time_flavor;
  lc.delta = delta;
  return lc;
}

std::vector<MultiIndex> base_generators(const VectorFieldSystem& sys, bool with_drift) {
  std::vector<MultiIndex> g;
  for (int i : sys.field_indices()) {
    if (i == 0 && !with_drift) continue;
    g.push_back(MultiIndex{i});
  }
  return g;
}

struct SearchSetup {
  GraphConfig cfg;
  LocalCost hash_cost;
  double slack;  // cost span of half a cell
};

// Distance search: unit-speed base controls, cost = time.
SearchSetup distance_setup(const VectorFieldSystem& sys, const Point& x, double scale, const Resolution& res) {
  SearchSetup s;
  const double tau = res.tau > 0 ? res.tau : scale / res.steps;
  BasisFamily eta = optimal_basis(sys, x, scale);
  s.hash_cost = local_cost(sys, x, eta, false, 1.0);
  s.cfg.origin = x;
  s.cfg.hash_basis = basis_matrix(sys, eta, x);
  s.slack = 0.0;
  for (size_t j = 0; j < eta.members.size(); ++j) {
    const int w = eta.members[j].weight();
    const double N = weight_factor(eta.members[j]);
    double c = res.kappa * (tau / scale) * std::pow(scale / N, w);
    s.cfg.cell.push_back(c);
    s.slack = std::max(s.slack, w == 1 ? 0.5 * c : N * std::pow(0.5 * c, 1.0 / w));
  }
  s.cfg.progress = [lc = s.hash_cost, x](const Point& z) { return lc(z - x); };
  s.cfg.generators = base_generators(sys, false);
  s.cfg.controls = unit_controls(static_cast<int>(s.cfg.generators.size()), res.directions,
                                 std::vector<double>(s.cfg.generators.size(), 1.0));
  s.cfg.step_time = tau;
  s.cfg.max_cells = res.max_cells;
  s.cfg.tol = std::max(1e-12, 1e-7 * tau);
  return s;
}

// Unit-time search at rate delta: controls a_I = delta^{|I|} u_I with |u| = 1.
SearchSetup time_setup(const VectorFieldSystem& sys, const Point& x, double delta, const std::vector<MultiIndex>& gens,
                       const Resolution& res) {
  SearchSetup s;
  const double tau = 1.0 / res.time_steps;
  BasisFamily eta = optimal_basis(sys, x, delta);
  s.hash_cost = local_cost(sys, x, eta, true, delta);
  s.cfg.origin = x;
  s.cfg.hash_basis = basis_matrix(sys, eta, x);
  for (const auto& I : eta.members) s.cfg.cell.push_back(res.kappa * tau * std::pow(delta, I.weight()));
  s.slack = 0.5 * res.kappa * tau;
  s.cfg.progress = [lc = s.hash_cost, x](const Point& z) { return lc(z - x); };
  s.cfg.generators = gens;
  std::vector<double> speed;
  for (const auto& I : gens) speed.push_back(std::pow(delta, I.weight()));
  s.cfg.controls = unit_controls(static_cast<int>(gens.size()), res.directions, speed);
  s.cfg.step_time = tau;
  s.cfg.max_cells = res.max_cells;
  s.cfg.tol = std::max(1e-12, 1e-7 * tau * delta);
  return s;
}

void check_points(const VectorFieldSystem& sys, const Point& x, const Point& y) {
  if (x.size() != sys.dim() || y.size() != sys.dim()) throw Error("point dimension does not match the system");
  if (!sys.domain().contains(x) || !sys.domain().contains(y)) {
    throw DomainError("points " + format_point(x) + ", " + format_point(y) + " must lie in the domain");
  }
}

double scale_estimate(const VectorFieldSystem& sys, const Point& x, const Point& y) {
  try {
    UpperOptions uo;
    uo.refine = false;
    uo.max_depth = 4;
    return d1_upper(sys, x, y, uo).upper;
  } catch (const Error&) {
    return euclid_bracket(sys, x, y).upper;
  }
}

// Minimal search cost to reach y, bridging the last gap with a local estimate.
double search_to(const VectorFieldSystem& sys, SearchSetup& s, const Point& y, const LocalCost& target, double limit,
                 long& cells) {
  ControlGraph g(sys, s.cfg);
  const double cap = 6 * s.slack;
  double best = kInf, uncapped = kInf;
  g.run(limit, [&](const Point& z, double cost) {
    if (cost >= best) return false;
    double l = target(z - y);
    if (l <= cap) best = std::min(best, cost + l);
    uncapped = std::min(uncapped, cost + l);
    return true;
  });
  cells += static_cast<long>(g.cell_count());
  // Near a rank drop the target frame can be too degenerate for any
  // representative to bridge within the cap; keep the best bridge then.
  if (!std::isfinite(best) && uncapped <= limit) return uncapped;
  return best;
}

// Solves T(delta) = 1 for the minimal unit-time rate reaching y.
GraphDistance delta_search(const VectorFieldSystem& sys, const Point& x, const Point& y, const std::vector<MultiIndex>& gens,
                           const Resolution& res) {
  GraphDistance out;
  out.scale = res.scale > 0 ? res.scale : scale_estimate(sys, x, y);
  out.tau = 1.0 / res.time_steps;
  auto T = [&](double delta) {
    SearchSetup s = time_setup(sys, x, delta, gens, res);
    BasisFamily eta_y = optimal_basis(sys, y, delta);
    LocalCost target = local_cost(sys, y, eta_y, true, delta);
    ++out.searches;
    return search_to(sys, s, y, target, 1.5, out.cells);
  };
  double lo = 0.0, hi = kInf;
  double a = 1.0;
  double delta = out.scale;
  double prev_d = 0.0, prev_t = 0.0;
  double best_d = kInf, best_err = kInf;
  for (int it = 0; it < 12; ++it) {
    double t = T(delta);
    if (t <= 1.0) {
      hi = std::min(hi, delta);
    } else {
      lo = std::max(lo, delta);
    }
    double next;
    if (std::isfinite(t)) {
      if (prev_d > 0.0 && std::isfinite(prev_t) && std::fabs(std::log(delta / prev_d)) > 1e-12) {
        double slope = -(std::log(t) - std::log(prev_t)) / (std::log(delta) - std::log(prev_d));
        if (std::isfinite(slope)) a = std::clamp(slope, 0.5, 2.0 * sys.step());
      }
      double corrected = delta * std::pow(t, 1.0 / a);
      double err = std::fabs(std::log(t));
      if (err < best_err) {
        best_err = err;
        best_d = corrected;
      }
      if (err < 1e-3 || err < 0.1 * out.tau) break;
      next = corrected;
    } else {
      next = 2.0 * delta;
    }
    if (!(next > lo && next < hi)) next = std::isfinite(hi) ? (lo > 0 ? std::sqrt(lo * hi) : 0.5 * hi) : 2.0 * lo;
    if (std::isfinite(hi) && lo > 0 && hi / lo < 1 + 1e-3) break;
    prev_d = delta;
    prev_t = t;
    delta = next;
  }
  if (!std::isfinite(best_d)) {
    if (!std::isfinite(hi)) throw BudgetError("target not reached: distance > " + std::to_string(lo));
    best_d = hi;
  }
  out.value = std::clamp(best_d, lo, hi);
  return out;
}

}  // namespace

std::string to_string(Flavor f) { return f == Flavor::D ? "d" : "d1"; }

// ---------------------------------------------------------------- paths

double factor_bound(const FactorList& factors) {
  bool drift = false;
  double sum = 0.0;
  for (const auto& f : factors) {
    sum += std::fabs(f.time);
    drift = drift || f.field == 0;
  }
  if (!drift || sum == 0.0) return sum;
  auto g = [&](double d) {
    double s = 0.0;
    for (const auto& f : factors) s += std::fabs(f.time) / std::pow(d, field_weight(f.field));
    return s;
  };
  double lo = 0.0, hi = std::max(1.0, sum);
  while (g(hi) > 1.0) hi *= 2;
  for (int k = 0; k < 200 && hi - lo > 1e-15 * hi; ++k) {
    double mid = 0.5 * (lo + hi);
    (g(mid) <= 1.0 ? hi : lo) = mid;
  }
  return hi;
}

ControlSchedule path_schedule(const AdmissiblePath& path) {
  ControlSchedule s;
  const double delta = path.bound;
  std::vector<double> len;
  double total = 0.0;
  for (const auto& f : path.segments) {
    len.push_back(delta > 0 ? std::fabs(f.time) / std::pow(delta, field_weight(f.field)) : 0.0);
    total += len.back();
  }
  double at = 0.0;
  for (size_t k = 0; k < path.segments.size(); ++k) {
    if (len[k] == 0.0) continue;
    double l = len[k] / total;  // exact tiling of [0,1]
    double end = k + 1 == path.segments.size() ? 1.0 : std::min(1.0, at + l);
    const auto& f = path.segments[k];
    s.pieces.push_back({at, end, {{MultiIndex{f.field}, f.time / (end - at)}}});
    at = end;
  }
  if (!s.pieces.empty()) s.pieces.back().end = 1.0;
  return s;
}

Point reintegrate(const VectorFieldSystem& sys, const AdmissiblePath& path, const FlowOptions& opt) {
  return apply_factors(sys, path.segments, path.start, opt);
}

namespace {

struct ChartStep {
  FactorList factors;
  Point end;
  int limit;
};

ChartStep chart_step(const VectorFieldSystem& sys, const Point& z, const Point& target, const FlowOptions& flow) {
  double scale = std::max(std::pow((target - z).norm(), 1.0 / sys.step()), 1e-12);
  BasisFamily eta = optimal_basis(sys, z, scale);
  ChartData cd = make_chart(sys, z, eta, 0.0, flow);
  Point h = chart_inverse(cd, target);
  FactorList all = chart_factors(cd, h);
  double tmax = 0.0;
  for (const auto& f : all) tmax = std::max(tmax, std::fabs(f.time));
  ChartStep st;
  for (const auto& f : all) {
    if (std::fabs(f.time) > 1e-12 * tmax) st.factors.push_back(f);
  }
  st.end = apply_factors(sys, st.factors, z, flow);
  st.limit = 0;
  for (const auto& I : eta.members) st.limit += factor_count(I.length());
  return st;
}

void append(AdmissiblePath& path, const ChartStep& st) {
  path.segments.insert(path.segments.end(), st.factors.begin(), st.factors.end());
  path.end = st.end;
  ++path.charts;
  path.segment_limit += st.limit;
}

AdmissiblePath chain_segment(const VectorFieldSystem& sys, const Point& x, const Point& y, int pieces, const FlowOptions& flow) {
  AdmissiblePath path;
  path.start = x;
  path.end = x;
  Point z = x;
  for (int i = 1; i <= pieces; ++i) {
    Point target = i == pieces ? y : Point(x + (double(i) / pieces) * (y - x));
    append(path, chart_step(sys, z, target, flow));
    z = path.end;
  }
  path.bound = factor_bound(path.segments);
  return path;
}

}  // namespace

AdmissiblePath connect(const VectorFieldSystem& sys, const Point& x, const Point& y, const ConnectOptions& opt) {
  check_points(sys, x, y);
  AdmissiblePath path;
  path.start = x;
  path.end = x;
  if (x == y) return path;
  Point z = x;
  for (int pieces = 0;; ++pieces) {
    if (pieces > 4096) throw ConvergenceError("connect: too many chart pieces", (z - y).norm());
    Point target = y;
    bool final_leg = true;
    for (int depth = 0;; ++depth) {
      try {
        append(path, chart_step(sys, z, target, opt.flow));
        break;
      } catch (const ConvergenceError& e) {
        if (depth >= opt.max_depth) throw ConvergenceError(std::string("connect: chaining depth exceeded: ") + e.what(), e.residual());
      } catch (const DomainError& e) {
        if (depth >= opt.max_depth) throw ConvergenceError(std::string("connect: chaining depth exceeded: ") + e.what());
      }
      target = z + 0.5 * (target - z);
      final_leg = false;
    }
    z = path.end;
    if (final_leg) break;
  }
  path.bound = factor_bound(path.segments);
  return path;
}

SubunitPath subunit_reparametrize(const AdmissiblePath& path) {
  SubunitPath sp;
  sp.start = path.start;
  double t = 0.0;
  for (const auto& f : path.segments) {
    if (f.field == 0) throw HypothesisError("subunit form is undefined for paths using the drift");
    if (f.time == 0.0) continue;
    double len = std::fabs(f.time);
    sp.segments.push_back({f.field, f.time > 0 ? 1.0 : -1.0, t, t + len});
    t += len;
  }
  sp.hitting_time = t;
  return sp;
}

Point integrate_subunit(const VectorFieldSystem& sys, const SubunitPath& path, const FlowOptions& opt) {
  Point z = path.start;
  for (const auto& s : path.segments) z = exp_map(sys, s.field, s.sign * (s.end - s.begin), z, opt);
  return z;
}

// ---------------------------------------------------------------- distances

DistanceEstimate d1_upper(const VectorFieldSystem& sys, const Point& x, const Point& y, const UpperOptions& opt) {
  check_points(sys, x, y);
  DistanceEstimate est;
  est.lower_method = "euclidean-bracket";
  est.upper_method = "chart";
  est.witness.start = x;
  est.witness.end = x;
  if (x == y) return est;
  est.lower = euclid_bracket(sys, x, y).lower;

  std::optional<AdmissiblePath> best;
  double prev = kInf;
  int worse = 0;
  std::string last_error;
  for (int level = 0; level <= opt.max_depth; ++level) {
    AdmissiblePath p;
    try {
      p = chain_segment(sys, x, y, 1 << level, opt.flow);
    } catch (const ConvergenceError& e) {
      last_error = e.what();
      continue;
    } catch (const DomainError& e) {
      last_error = e.what();
      continue;
    }
    if (!best || p.bound < best->bound) best = p;
    if (!opt.refine) break;
    if (std::isfinite(prev)) {
      if (std::fabs(p.bound - prev) < 0.01 * prev) break;
      if (p.bound > prev && ++worse >= 2) break;
    }
    prev = p.bound;
  }
  if (!best) throw ConvergenceError("chart inversion failed after subdivision: " + last_error);
  est.witness = *best;
  est.upper = best->bound;
  if (est.lower > est.upper) est.lower = est.upper;
  return est;
}

GraphDistance d1_graph(const VectorFieldSystem& sys, const Point& x, const Point& y, const Resolution& res) {
  check_points(sys, x, y);
  GraphDistance out;
  if (x == y) return out;
  if (sys.has_drift()) return delta_search(sys, x, y, base_generators(sys, true), res);
  out.scale = res.scale > 0 ? res.scale : scale_estimate(sys, x, y);
  auto search = [&] {
    SearchSetup s = distance_setup(sys, x, out.scale, res);
    out.tau = s.cfg.step_time;
    const double bridge = std::sqrt(res.kappa * out.tau * out.scale);
    LocalCost target = local_cost(sys, y, optimal_basis(sys, y, bridge), false, 1.0);
    ++out.searches;
    out.value = search_to(sys, s, y, target, 4.0 * out.scale + out.tau, out.cells);
    if (!std::isfinite(out.value)) {
      throw BudgetError("target not reached: d1 > " + std::to_string(4.0 * out.scale));
    }
  };
  search();
  // A loose chart estimate makes the cells too coarse; redo at the found scale.
  if (res.scale <= 0 && out.value < 0.5 * out.scale) {
    out.scale = out.value;
    search();
  }
  return out;
}

GraphDistance d_graph(const VectorFieldSystem& sys, const Point& x, const Point& y, const Resolution& res) {
  check_points(sys, x, y);
  if (x == y) return {};
  return delta_search(sys, x, y, sys.commutators(), res);
}

EuclidConstants euclid_constants(const VectorFieldSystem& sys) {
  static std::mutex mu;
  static std::map<const VectorFieldSystem*, EuclidConstants> cache;
  {
    std::lock_guard<std::mutex> lock(mu);
    if (auto it = cache.find(&sys); it != cache.end()) return it->second;
  }
  const int p = sys.dim();
  const int per_side = p <= 2 ? 21 : p == 3 ? 11 : 5;
  EuclidConstants c{0.0, kInf, 0};
  Point tmp(p);
  for (const Point& z : grid_points(sys.working(), per_side)) {
    double k = 0.0;
    for (int i = 0; i < static_cast<int>(sys.commutators().size()); ++i) {
      sys.commutator_fast(i, z, tmp);
      k += tmp.norm();
    }
    c.K = std::max(c.K, k);
    double best = 0.0;
    for (const auto& fv : enumerate_families(sys, z)) {
      if (fv.det <= 0.0) continue;
      Eigen::JacobiSVD<Eigen::MatrixXd> svd{Eigen::MatrixXd(basis_matrix(sys, fv.eta, z))};
      double s = svd.singularValues().minCoeff();
      best = std::max(best, s * s);
    }
    c.c0 = std::min(c.c0, best);
    ++c.grid_points;
  }
  if (!(c.c0 > 0.0)) throw RankError("Gram lower bound vanishes on the sample grid of " + sys.name());
  std::lock_guard<std::mutex> lock(mu);
  cache.emplace(&sys, c);
  return c;
}

EuclidBracket euclid_bracket(const VectorFieldSystem& sys, const Point& x, const Point& y) {
  EuclidBracket b{0.0, 0.0, euclid_constants(sys)};
  const double dist = (x - y).norm();
  if (dist == 0.0) return b;
  const double r = sys.step();
  double q = dist / b.constants.K;
  b.lower = q <= 1.0 ? q : std::pow(q, 1.0 / r);
  double A = dist / std::sqrt(b.constants.c0);
  b.upper = A <= 1.0 ? std::pow(A, 1.0 / r) : A;
  return b;
}

// ---------------------------------------------------------------- balls

BallOracle::BallOracle(const VectorFieldSystem& sys, const Point& x0, double radius, Flavor flavor, const Resolution& res)
    : x0_(x0), radius_(radius) {
  if (!(radius > 0)) throw Error("ball radius must be positive");
  if (!sys.domain().contains(x0)) throw DomainError("ball center " + format_point(x0) + " outside the domain");
  time_flavor_ = flavor == Flavor::D || sys.has_drift();
  SearchSetup s;
  if (time_flavor_) {
    auto gens = flavor == Flavor::D ? sys.commutators() : base_generators(sys, true);
    s = time_setup(sys, x0, radius, gens, res);
    delta_ = radius;
  } else {
    s = distance_setup(sys, x0, res.scale > 0 ? res.scale : radius, res);
  }
  for (int j = 0; j < static_cast<int>(s.hash_cost.weight.size()); ++j) {
    weight_.push_back(s.hash_cost.weight[j]);
    factor_.push_back(s.hash_cost.factor[j]);
  }
  slack_ = s.slack;
  reach_ = static_cast<int>(std::ceil(1.0 / res.kappa - 1e-9));
  for (int w : weight_) inv_scale_.push_back(std::pow(delta_, -w));
  cell_volume_ = std::fabs(s.cfg.hash_basis.determinant());
  for (double c : s.cfg.cell) cell_volume_ *= c;
  graph_ = std::make_unique<ControlGraph>(sys, s.cfg);
  offsets_ = graph_->neighbor_offsets(reach_);
  graph_->run(threshold(), [](const Point&, double) { return true; });
}

double BallOracle::cost(const Point& y) const {
  const int p = graph_->dim();
  const Point hy = graph_->hash_coords(y);
  double best = kInf;
  double dh[16];
  graph_->for_each_neighbor(hy, offsets_, [&](int idx) {
    const double* hc = graph_->hash_point(idx);
    for (int j = 0; j < p; ++j) dh[j] = hy[j] - hc[j];
    double l;
    if (time_flavor_) {
      double s = 0.0;
      for (int j = 0; j < p; ++j) {
        double q = dh[j] * inv_scale_[j];
        s += q * q;
      }
      l = std::sqrt(s);
    } else {
      double lin = 0.0, rest = 0.0;
      for (int j = 0; j < p; ++j) {
        const double a = std::fabs(dh[j]);
        switch (weight_[j]) {
          case 1:
            lin += a * a;
            break;
          case 2:
            rest += factor_[j] * std::sqrt(a);
            break;
          case 3:
            rest += factor_[j] * std::cbrt(a);
            break;
          default:
            rest += factor_[j] * std::pow(a, 1.0 / weight_[j]);
        }
      }
      l = std::sqrt(lin) + rest;
    }
    best = std::min(best, graph_->cell(idx).cost + l);
  });
  return best;
}

bool BallOracle::contains_within(const Point& y, double rho) const {
  if (time_flavor_) throw HypothesisError("nested radii need the distance flavor");
  return cost(y) <= rho;
}

Box BallOracle::bounding_box() const { return bounding_box(threshold()); }

Box BallOracle::bounding_box(double within) const {
  const int p = graph_->dim();
  std::vector<int> lo(p, std::numeric_limits<int>::max()), hi(p, std::numeric_limits<int>::min());
  for (size_t i = 0; i < graph_->cell_count(); ++i) {
    const auto& c = graph_->cell(static_cast<int>(i));
    if (!c.settled || c.cost > within) continue;
    auto k = graph_->unpack(c.key);
    for (int j = 0; j < p; ++j) {
      lo[j] = std::min(lo[j], k[j]);
      hi[j] = std::max(hi[j], k[j]);
    }
  }
  const auto& cfg = graph_->config();
  Point hc(p), hw(p);
  for (int j = 0; j < p; ++j) {
    double a = (lo[j] - reach_) * cfg.cell[j], b = (hi[j] + 1 + reach_) * cfg.cell[j];
    hc[j] = 0.5 * (a + b);
    hw[j] = 0.5 * (b - a);
  }
  Point c = x0_ + cfg.hash_basis * hc;
  Point w = cfg.hash_basis.cwiseAbs() * hw;
  Box b{c - w, c + w};
  return b;
}

std::vector<CellKey> BallOracle::candidate_cells() const {
  std::unordered_set<CellKey, CellKeyHash> seen;
  std::vector<CellKey> out;
  const int p = graph_->dim();
  for (size_t i = 0; i < graph_->cell_count(); ++i) {
    const auto& c = graph_->cell(static_cast<int>(i));
    if (!c.settled) continue;
    auto k = graph_->unpack(c.key);
    std::vector<int> off(p, -reach_);
    for (;;) {
      std::vector<int> n(p);
      for (int j = 0; j < p; ++j) n[j] = k[j] + off[j];
      CellKey nk = graph_->pack(n);
      if (seen.insert(nk).second) out.push_back(nk);
      int j = 0;
      while (j < p && off[j] == reach_) off[j++] = -reach_;
      if (j == p) break;
      ++off[j];
    }
  }
  std::sort(out.begin(), out.end(), [](const CellKey& a, const CellKey& b) { return a.hi != b.hi ? a.hi < b.hi : a.lo < b.lo; });
  return out;
}

namespace {

// Wilson score interval for k successes in n trials at 95%.
std::pair<double, double> wilson(long k, long n) {
  const double z = 1.959963984540054;
  double ph = double(k) / n;
  double den = 1 + z * z / n;
  double mid = (ph + z * z / (2.0 * n)) / den;
  double half = z * std::sqrt(ph * (1 - ph) / n + z * z / (4.0 * n * n)) / den;
  return {std::max(0.0, mid - half), std::min(1.0, mid + half)};
}

}  // namespace

BallEstimate volume_from_oracle(const BallOracle& oracle, Flavor flavor, const BallOptions& opt) {
  BallEstimate est;
  est.center = oracle.center();
  est.radius = oracle.radius();
  est.flavor = flavor;
  est.resolution = oracle.slack();
  const double thr = oracle.threshold();
  if (opt.method == BallMethod::FloodFill) {
    est.method = "flood-fill";
    long in = 0, inner = 0, outer = 0;
    auto cells = oracle.candidate_cells();
    for (const auto& k : cells) {
      double c = oracle.cost(oracle.graph().cell_center(k));
      in += c <= thr;
      inner += c <= thr - oracle.slack();
      outer += c <= thr + oracle.slack();
    }
    est.samples = static_cast<long>(cells.size());
    est.volume = in * oracle.cell_volume();
    est.ci_low = inner * oracle.cell_volume();
    est.ci_high = outer * oracle.cell_volume();
    return est;
  }
  est.method = "sampling";
  Box box = oracle.bounding_box();
  double box_volume = 1.0;
  for (int j = 0; j < box.dim(); ++j) box_volume *= box.hi[j] - box.lo[j];
  auto rng = substream(opt.seed, "ball_volume");
  long k = 0;
  Point y(box.dim());
  for (long i = 0; i < opt.budget; ++i) {
    for (int j = 0; j < box.dim(); ++j) y[j] = box.lo[j] + uniform01(rng) * (box.hi[j] - box.lo[j]);
    k += oracle.contains(y);
  }
  est.samples = opt.budget;
  est.volume = box_volume * double(k) / opt.budget;
  auto [lo, hi] = wilson(k, opt.budget);
  est.ci_low = box_volume * lo;
  est.ci_high = box_volume * hi;
  if (opt.ci_target > 0 && est.volume > 0 && (est.ci_high - est.ci_low) > 2 * opt.ci_target * est.volume) {
    throw BudgetError("sample budget " + std::to_string(opt.budget) + " exhausted before the CI target");
  }
  return est;
}

BallEstimate ball_volume(const VectorFieldSystem& sys, const Point& x0, double rho, Flavor flavor, const BallOptions& opt) {
  if (rho == 0.0) {
    BallEstimate e;
    e.center = x0;
    e.flavor = flavor;
    e.method = opt.method == BallMethod::FloodFill ? "flood-fill" : "sampling";
    return e;
  }
  BallOracle oracle(sys, x0, rho, flavor, opt.res);
  return volume_from_oracle(oracle, flavor, opt);
}

double volume_formula_denominator(const VectorFieldSystem& sys, const Point& x0, double rho) {
  double s = 0.0;
  for (const auto& fv : enumerate_families(sys, x0)) s += fv.det * std::pow(rho, fv.eta.weight());
  return s;
}

double volume_formula_ratio(const VectorFieldSystem& sys, const Point& x0, double rho, Flavor flavor, const BallOptions& opt) {
  double den = volume_formula_denominator(sys, x0, rho);
  if (!(den > 0.0)) throw RankError("volume formula denominator vanishes at " + format_point(x0));
  return ball_volume(sys, x0, rho, flavor, opt).volume / den;
}

InclusionReport ball_inclusion_check(const VectorFieldSystem& sys, const Point& x0, double rho, const Resolution& res) {
  TaylorSystem ts = taylor_system(sys, x0);
  if (rho > ts.validity_radius) {
    throw HypothesisError("radius " + std::to_string(rho) + " exceeds the Taylor validity radius " +
                          std::to_string(ts.validity_radius));
  }
  if (sys.has_drift()) throw HypothesisError("ball comparison uses the distance flavor; drift systems are not supported");
  // Same cells and step for both systems; S-costs beyond 2 rho read as infinite.
  Resolution shared = res;
  shared.scale = rho;
  shared.tau = rho / res.steps;
  BallOracle bx(sys, x0, 2 * rho, Flavor::D1, shared);
  BallOracle bs(*ts.system, x0, 2 * rho, Flavor::D1, shared);
  InclusionReport rep{rho, kInf, 0.0, std::max(bx.slack(), bs.slack()) / rho, 0};
  for (const auto& k : bx.candidate_cells()) {
    Point c = bx.graph().cell_center(k);
    double dx = bx.cost(c);
    if (!(dx <= 2 * rho)) continue;
    double ds = bs.cost(c);
    ++rep.cells;
    if (dx <= rho) {
      rep.c2 = std::max(rep.c2, ds / rho);
    } else {
      rep.c1 = std::min(rep.c1, ds / rho);
    }
  }
  return rep;
}

double certified_radius(const VectorFieldSystem& sys, const Point& x0) {
  double chart = 0.5 * sys.domain().distance_to_boundary(x0);
  double taylor = taylor_system(sys, x0).validity_radius;
  double work = 0.25 * sys.working().distance_to_boundary(x0);
  return std::min({chart, taylor, work});
}

EquivalenceStats distance_equivalence_ratio(const VectorFieldSystem& sys, const std::vector<std::pair<Point, Point>>& pairs,
                                            const Resolution& res) {
  EquivalenceStats st;
  for (const auto& [x, y] : pairs) {
    if (x == y) {
      st.d.push_back(0.0);
      st.d1.push_back(0.0);
      st.ratio.push_back(std::numeric_limits<double>::quiet_NaN());
      ++st.skipped;
      continue;
    }
    GraphDistance g1 = d1_graph(sys, x, y, res);
    Resolution rd = res;
    rd.scale = g1.value;
    GraphDistance g = d_graph(sys, x, y, rd);
    st.d1.push_back(g1.value);
    st.d.push_back(g.value);
    st.ratio.push_back(g1.value / g.value);
    st.max_ratio = std::max(st.max_ratio, g1.value / g.value);
    if (g.value > g1.value + 2 * g1.tau) ++st.order_violations;
  }
  return st;
}

}  // namespace hvf
