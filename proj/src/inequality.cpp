#include "hvf/inequality.hpp"

#include "hvf/parallel.hpp"
#include "hvf/rng.hpp"

#include <array>
#include <cmath>
#include <limits>

namespace hvf {

namespace {

constexpr long kChunk = 8192;

std::vector<int> base_fields(const VectorFieldSystem& sys) {
  std::vector<int> out;
  for (int i : sys.field_indices()) {
    if (i != 0) out.push_back(i);
  }
  return out;
}

struct Strata {
  std::vector<Point> points;
  std::vector<double> cost;
  std::vector<double> weight;
};

// Uniform points of box, minus those in skip. Chunk c draws from its own
// substream, so the sample does not depend on the worker count.
void draw(const BallOracle& oracle, const Box& box, const Box* skip, long n, uint64_t seed, const char* stream,
          int workers, Strata& out) {
  const int p = box.dim();
  double volume = 1.0;
  for (int j = 0; j < p; ++j) volume *= box.hi[j] - box.lo[j];
  const double w = volume / static_cast<double>(n);
  const int chunks = static_cast<int>((n + kChunk - 1) / kChunk);
  std::vector<Strata> parts(chunks);
  parallel_for(chunks, workers, [&](int c) {
    auto rng = substream(seed, stream, static_cast<uint64_t>(c));
    const long end = std::min(n, (c + 1) * kChunk);
    Strata& part = parts[c];
    for (long i = c * kChunk; i < end; ++i) {
      Point y(p);
      for (int j = 0; j < p; ++j) y[j] = box.lo[j] + uniform01(rng) * (box.hi[j] - box.lo[j]);
      if (skip && skip->contains(y)) continue;
      part.cost.push_back(oracle.cost(y));
      part.points.push_back(y);
      part.weight.push_back(w);
    }
  });
  for (auto& part : parts) {
    out.points.insert(out.points.end(), part.points.begin(), part.points.end());
    out.cost.insert(out.cost.end(), part.cost.begin(), part.cost.end());
    out.weight.insert(out.weight.end(), part.weight.begin(), part.weight.end());
  }
}

void require_distance_flavor(const VectorFieldSystem& sys) {
  if (sys.has_drift()) throw HypothesisError("ball integrals use d1 balls; systems with drift are not supported");
}

// Gauss-Legendre nodes and weights on [-1, 1].
const std::array<std::pair<double, double>, 32>& gauss32() {
  static const auto table = [] {
    std::array<std::pair<double, double>, 32> t{};
    const int n = 32;
    for (int i = 0; i < n; ++i) {
      double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
      double dp = 0.0;
      for (int it = 0; it < 100; ++it) {
        double p0 = 1.0, p1 = x;
        for (int k = 2; k <= n; ++k) {
          double pk = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
          p0 = p1;
          p1 = pk;
        }
        dp = n * (x * p1 - p0) / (x * x - 1);
        double dx = p1 / dp;
        x -= dx;
        if (std::fabs(dx) < 1e-16) break;
      }
      t[i] = {x, 2.0 / ((1 - x * x) * dp * dp)};
    }
    return t;
  }();
  return table;
}

}  // namespace

GradientEvaluator::GradientEvaluator(const VectorFieldSystem& sys, const TestFunctionDef& u) : sys_(sys), u_(u.expr) {
  if (u.smooth.max_jet_order() < 1) {
    throw SmoothnessError("test function " + u.name + " is declared " + u.smooth.to_string() + "; C^1 is required");
  }
  for (int k = 0; k < sys.dim(); ++k) du_.emplace_back(differentiate(u.expr, k));
  fields_ = base_fields(sys);
}

Point GradientEvaluator::gradient(const Point& x) const {
  Point g(sys_.dim());
  for (int k = 0; k < sys_.dim(); ++k) g[k] = du_[k](x);
  return g;
}

Point GradientEvaluator::x_gradient(const Point& x) const { return x_gradient(sys_, x); }

Point GradientEvaluator::x_gradient(const VectorFieldSystem& other, const Point& x) const {
  Point g = gradient(x);
  Point out(static_cast<int>(fields_.size()));
  Point b(other.dim());
  for (size_t i = 0; i < fields_.size(); ++i) {
    other.field_fast(fields_[i], x, b);
    out[static_cast<int>(i)] = b.dot(g);
  }
  return out;
}

Point x_gradient(const VectorFieldSystem& sys, const TestFunctionDef& u, const Point& x) {
  if (!sys.domain().contains(x)) throw DomainError("point " + format_point(x) + " outside the domain");
  return GradientEvaluator(sys, u).x_gradient(x);
}

// ---------------------------------------------------------------- Poincare

namespace {

double outer_radius(const VectorFieldSystem& sys, double rho, double lambda, const IntegralOptions& opt) {
  require_distance_flavor(sys);
  if (!(rho > 0)) throw Error("radius must be positive");
  if (!(lambda >= 1.0)) throw Error("lambda must be >= 1");
  if (opt.samples < 2) throw Error("sample budget must be at least 2");
  return lambda * rho;
}

}  // namespace

BallIntegrator::BallIntegrator(const VectorFieldSystem& sys, const Point& x0, double rho, double lambda,
                               const IntegralOptions& opt)
    : sys_(sys),
      x0_(x0),
      rho_(rho),
      lambda_(lambda),
      opt_(opt),
      oracle_(sys, x0, outer_radius(sys, rho, lambda, opt), Flavor::D1, opt.res) {
  Strata s;
  const long n = opt.samples;
  Box inner = oracle_.bounding_box(rho);
  if (lambda == 1.0) {
    draw(oracle_, inner, nullptr, n, opt.seed, "ball_integral_inner", opt.workers, s);
  } else {
    draw(oracle_, inner, nullptr, n / 2, opt.seed, "ball_integral_inner", opt.workers, s);
    draw(oracle_, oracle_.bounding_box(lambda * rho), &inner, n - n / 2, opt.seed, "ball_integral_outer", opt.workers,
         s);
  }
  points_ = std::move(s.points);
  cost_ = std::move(s.cost);
  weight_ = std::move(s.weight);
}

InequalityReport BallIntegrator::mean_oscillation(const TestFunctionDef& u, double p, bool same_ball) const {
  if (!(p >= 1.0)) throw Error("exponent p must be >= 1");
  GradientEvaluator ge(sys_, u);
  InequalityReport r;
  r.x0 = x0_;
  r.rho = rho_;
  r.lambda = same_ball ? 1.0 : lambda_;
  r.p = p;
  r.samples = opt_.samples;
  r.resolution = oracle_.slack();

  double sum_u = 0.0, abs_u = 0.0, volume = 0.0;
  std::vector<double> uv(points_.size(), 0.0);
  for (size_t i = 0; i < points_.size(); ++i) {
    if (cost_[i] <= rho_) {
      uv[i] = ge.value(points_[i]);
      sum_u += weight_[i] * uv[i];
      abs_u += weight_[i] * std::fabs(uv[i]);
      volume += weight_[i];
      ++r.inside;
    }
  }
  r.ball_volume = volume;
  if (r.inside == 0) throw BudgetError("no sample fell inside the ball; raise the sample budget");
  const double ub = sum_u / volume;

  const double outer = same_ball ? rho_ : lambda_ * rho_;
  double lhs = 0.0, rhs = 0.0;
  for (size_t i = 0; i < points_.size(); ++i) {
    if (cost_[i] <= rho_) lhs += weight_[i] * std::pow(std::fabs(uv[i] - ub), p);
    if (cost_[i] <= outer) rhs += weight_[i] * std::pow(ge.x_gradient(points_[i]).norm(), p);
  }
  r.lhs = std::pow(lhs, 1.0 / p);
  r.rhs = rho_ * std::pow(rhs, 1.0 / p);
  // Oscillation at rounding level of the mean counts as zero.
  const double floor = 1e-12 * std::pow(volume, 1.0 / p) * std::max(std::fabs(ub), abs_u / volume);
  if (r.lhs <= floor) {
    r.lhs = 0.0;
    r.implied_constant = 0.0;
  } else if (r.rhs == 0.0) {
    throw HypothesisError("right-hand side vanishes while the left-hand side is " + std::to_string(r.lhs) +
                          " for " + u.name + " at " + format_point(x0_) + ", rho = " + std::to_string(rho_));
  } else {
    r.implied_constant = r.lhs / r.rhs;
  }
  return r;
}

InequalityReport BallIntegrator::poincare(const TestFunctionDef& u) const {
  InequalityReport r = mean_oscillation(u, 1.0, false);
  r.operation = "poincare";
  return r;
}

InequalityReport BallIntegrator::p_poincare(const TestFunctionDef& u, double p) const {
  InequalityReport r = mean_oscillation(u, p, true);
  r.operation = "p_poincare";
  return r;
}

InequalityReport poincare_ratio(const VectorFieldSystem& sys, const TestFunctionDef& u, const Point& x0, double rho,
                                double lambda, const IntegralOptions& opt) {
  return BallIntegrator(sys, x0, rho, lambda, opt).poincare(u);
}

InequalityReport p_poincare_ratio(const VectorFieldSystem& sys, const TestFunctionDef& u, const Point& x0, double rho,
                                  double p, const IntegralOptions& opt) {
  if (!(p >= 1.0)) throw Error("exponent p must be >= 1");
  return BallIntegrator(sys, x0, rho, 1.0, opt).p_poincare(u, p);
}

// ---------------------------------------------------------------- Sobolev

void check_support(const VectorFieldSystem& sys, const TestFunctionDef& phi, int per_side) {
  if (!phi.support) throw HypothesisError("test function " + phi.name + " has no declared support");
  const Point& R = *phi.support;
  if (R.size() != sys.dim()) throw HypothesisError("support of " + phi.name + " has the wrong dimension");
  GradientEvaluator ge(sys, phi);
  const int p = sys.dim();
  std::vector<int> idx(p - 1, 0);
  Point x(p);
  for (int face = 0; face < p; ++face) {
    for (double side : {-R[face], R[face]}) {
      std::fill(idx.begin(), idx.end(), 0);
      for (;;) {
        for (int j = 0, m = 0; j < p; ++j) {
          x[j] = j == face ? side : -R[j] + 2 * R[j] * idx[m++] / (per_side - 1);
        }
        double v = std::fabs(ge.value(x));
        double g = ge.gradient(x).norm();
        if (v > 1e-12 || g > 1e-12) {
          throw HypothesisError("support violation: " + phi.name + " does not vanish at " + format_point(x));
        }
        int j = 0;
        while (j < p - 1 && idx[j] == per_side - 1) idx[j++] = 0;
        if (j == p - 1) break;
        ++idx[j];
      }
    }
  }
}

SobolevResult sobolev_exponent(const VectorFieldSystem& sys, const TestFunctionDef& phi, const Point& x0, double rho,
                               double p, const SobolevOptions& opt) {
  require_distance_flavor(sys);
  if (!(p >= 1.0)) throw Error("exponent p must be >= 1");
  if (opt.levels < 2) throw Error("the radius sweep needs at least two levels");
  check_support(sys, phi);
  GradientEvaluator ge(sys, phi);

  SobolevResult res;
  res.cap = opt.cap;
  res.slope_tolerance = opt.slope_tolerance;
  res.p = p;
  for (int i = 11; i <= 30; ++i) res.k_grid.push_back(i / 10.0);

  // Midpoint rule on the support box, n nodes along every axis.
  const int dim = sys.dim();
  const Point& R = *phi.support;
  int n = opt.grid_per_side > 0 ? opt.grid_per_side
                                : std::max(8, static_cast<int>(std::floor(std::pow(double(opt.budget), 1.0 / dim))));
  const Point hcell = 2 * R / n;
  const double w = hcell.prod();
  long nonzero = 0;
  BallOracle inner(sys, x0, rho, Flavor::D1, opt.res);
  std::vector<double> Iq(res.k_grid.size(), 0.0);
  double Ip = 0.0;
  std::vector<int> idx(dim, 0);
  Point x(dim);
  for (;;) {
    for (int j = 0; j < dim; ++j) x[j] = -R[j] + (idx[j] + 0.5) * hcell[j];
    const double v = std::fabs(ge.value(x));
    if (v > 0.0) {
      ++nonzero;
      // Graph distances overestimate by up to two steps.
      if (inner.cost(x) > rho * (1 + 2.0 / opt.res.steps) + inner.slack()) {
        throw HypothesisError("support violation: " + phi.name + " is nonzero at " + format_point(x) +
                              " outside B(x0, " + std::to_string(rho) + ")");
      }
      for (size_t k = 0; k < res.k_grid.size(); ++k) Iq[k] += w * std::pow(v, res.k_grid[k] * p);
    }
    Ip += w * std::pow(ge.x_gradient(x).norm(), p);
    int j = 0;
    while (j < dim && idx[j] == n - 1) idx[j++] = 0;
    if (j == dim) break;
    ++idx[j];
  }

  bool zero = true;
  for (double q : Iq) zero = zero && q == 0.0;
  // A function that is nonzero at the center but at almost no node is a grid
  // mismatch, not a zero function.
  const long needed = std::min<long>(64, static_cast<long>(std::pow(n, dim)) / 8);
  if (nonzero < needed && ge.value(Point::Zero(dim)) != 0.0) {
    throw HypothesisError("quadrature resolves only " + std::to_string(nonzero) + " nodes inside the support of " +
                          phi.name + "; declare per-axis support radii or raise the budget");
  }
  if (Ip == 0.0 && !zero) throw HypothesisError("right-hand side vanishes for " + phi.name);

  std::vector<double> lr;
  for (int j = 0; j < opt.levels; ++j) {
    const double r = rho * std::ldexp(1.0, j);
    BallOptions bo;
    bo.res = opt.res;
    SobolevRow row{r, ball_volume(sys, x0, r, Flavor::D1, bo).volume, {}};
    for (size_t k = 0; k < res.k_grid.size(); ++k) {
      const double q = res.k_grid[k] * p;
      row.ratio.push_back(zero ? 0.0 : std::pow(Iq[k] / row.volume, 1.0 / q) / (r * std::pow(Ip / row.volume, 1.0 / p)));
    }
    lr.push_back(std::log(r));
    res.rows.push_back(std::move(row));
  }
  const double mean_lr = [&] {
    double m = 0;
    for (double v : lr) m += v;
    return m / lr.size();
  }();
  for (size_t k = 0; k < res.k_grid.size(); ++k) {
    double sxy = 0, sxx = 0, my = 0;
    if (!zero) {
      for (const auto& row : res.rows) my += std::log(row.ratio[k]);
      my /= res.rows.size();
      for (size_t j = 0; j < res.rows.size(); ++j) {
        sxy += (lr[j] - mean_lr) * (std::log(res.rows[j].ratio[k]) - my);
        sxx += (lr[j] - mean_lr) * (lr[j] - mean_lr);
      }
    }
    double slope = zero ? 0.0 : sxy / sxx;
    res.slope.push_back(slope);
    double worst = 0.0;
    for (const auto& row : res.rows) worst = std::max(worst, row.ratio[k]);
    if (slope <= opt.slope_tolerance && worst <= opt.cap) res.k = res.k_grid[k];
  }
  return res;
}

// ---------------------------------------------------------------- Lagrange

LagrangeReport lagrange_check(const VectorFieldSystem& sys, const TestFunctionDef& f, const Point& x0, double rho,
                              const Point& x, const ConnectOptions& copt) {
  require_distance_flavor(sys);
  GradientEvaluator ge(sys, f);
  LagrangeReport rep;
  rep.x0 = x0;
  rep.x = x;
  rep.rho = rho;
  AdmissiblePath path = connect(sys, x0, x, copt);
  rep.rho_hat = path.bound;
  rep.segments = static_cast<int>(path.segments.size());
  if (rep.rho_hat > rho * (1 + 1e-9)) {
    throw HypothesisError("connecting path has control bound " + std::to_string(rep.rho_hat) +
                          ", so x is not certified inside B1(x0, " + std::to_string(rho) + ")");
  }
  rep.lhs = std::fabs(ge.value(x) - ge.value(x0));
  double integral = 0.0;
  Point z = x0;
  for (const auto& piece : path_schedule(path).pieces) {
    const auto& term = piece.terms.front();
    const int field = term.index.idx[0];
    const double half = 0.5 * (piece.end - piece.begin);
    double t_prev = 0.0;
    Point y = z;
    // Nodes in increasing order, integrating from one node to the next.
    const auto& g = gauss32();
    for (int m = 31; m >= 0; --m) {
      const double t = half * (1 + g[m].first);
      y = exp_map(sys, field, term.coeff * (t - t_prev), y, copt.flow);
      t_prev = t;
      integral += half * g[m].second * ge.x_gradient(y).norm();
    }
    z = exp_map(sys, field, term.coeff * (2 * half - t_prev), y, copt.flow);
  }
  const double n = static_cast<double>(base_fields(sys).size());
  rep.rhs = std::sqrt(n) * rep.rho_hat * integral;
  rep.holds = rep.lhs <= rep.rhs * (1 + rep.slack) + 1e-14;
  return rep;
}

// ---------------------------------------------------------------- rough Poincare

namespace {

const TaylorSystem& checked_taylor(const VectorFieldSystem& sys, const Point& x0, double radius, TaylorSystem& ts) {
  ts = taylor_system(sys, x0);
  if (radius > ts.validity_radius) {
    throw HypothesisError("lambda rho = " + std::to_string(radius) + " exceeds the Taylor validity radius " +
                          std::to_string(ts.validity_radius));
  }
  return ts;
}

}  // namespace

RoughPoincareReport BallIntegrator::rough(const TestFunctionDef& u) const {
  TaylorSystem ts;
  const VectorFieldSystem& S = *checked_taylor(sys_, x0_, lambda_ * rho_, ts).system;
  GradientEvaluator ge(sys_, u);
  RoughPoincareReport r;
  r.x0 = x0_;
  r.rho = rho_;
  r.lambda = lambda_;
  r.samples = opt_.samples;
  double sum_u = 0.0, volume = 0.0;
  for (size_t i = 0; i < points_.size(); ++i) {
    if (cost_[i] <= rho_) {
      sum_u += weight_[i] * ge.value(points_[i]);
      volume += weight_[i];
    }
  }
  if (volume == 0.0) throw BudgetError("no sample fell inside the ball; raise the sample budget");
  const double ub = sum_u / volume;
  double lhs = 0.0, xs = 0.0, rem = 0.0, grad = 0.0;
  for (size_t i = 0; i < points_.size(); ++i) {
    const Point& y = points_[i];
    const double w = weight_[i];
    if (cost_[i] <= rho_) lhs += w * std::fabs(ge.value(y) - ub);
    if (cost_[i] > lambda_ * rho_) continue;
    Point xu = ge.x_gradient(y);
    Point su = ge.x_gradient(S, y);
    xs += w * su.norm();
    rem += w * (xu - su).norm();
    grad += w * ge.gradient(y).norm();
  }
  r.lhs = lhs;
  r.x_term = rho_ * xs;
  r.remainder_term = rho_ * rem;
  r.gradient_term = grad;
  r.coefficient = r.gradient_term > 0 ? r.remainder_term / (std::pow(rho_, sys_.step()) * r.gradient_term) : 0.0;
  return r;
}

RoughPoincareReport rough_poincare_decomposition(const VectorFieldSystem& sys, const TestFunctionDef& u, const Point& x0,
                                                 double rho, double lambda, const IntegralOptions& opt) {
  require_distance_flavor(sys);
  TaylorSystem ts;
  checked_taylor(sys, x0, lambda * rho, ts);
  return BallIntegrator(sys, x0, rho, lambda, opt).rough(u);
}

}  // namespace hvf
