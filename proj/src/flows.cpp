#include "hvf/flows.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>

namespace hvf {

namespace {

OdeOptions ode_options(const VectorFieldSystem& sys, const FlowOptions& opt) {
  OdeOptions o;
  o.abs_tol = opt.tol;
  o.rel_tol = opt.tol;
  o.max_steps = opt.max_steps;
  o.domain = &sys.domain();
  return o;
}

void check_field(const VectorFieldSystem& sys, int field) {
  if (!sys.has_field(field)) throw Error("field " + std::to_string(field) + " is not defined in system '" + sys.name() + "'");
}

}  // namespace

CertifiedPoint exp_map_certified(const VectorFieldSystem& sys, int field, double t, const Point& x,
                                 const FlowOptions& opt) {
  check_field(sys, field);
  if (!sys.domain().contains(x)) throw DomainError("flow start " + format_point(x) + " outside the domain");
  auto f = [&](const Point& y, Point& out) { sys.field_fast(field, y, out); };
  OdeOptions o = ode_options(sys, opt);
  o.record_steps = opt.certify;
  OdeResult r = integrate_dp45(f, x, t, o);
  CertifiedPoint cp{r.end, 0.0, r.accepted};
  if (opt.certify) {
    cp.error_estimate = step_halving_error(f, x, t, r.steps);
    if (cp.error_estimate > 10 * opt.tol) {
      throw IntegrationError("step-halving error " + std::to_string(cp.error_estimate) + " exceeds 10*tol for exp(" +
                             std::to_string(t) + " X" + std::to_string(field) + ") from " + format_point(x));
    }
  }
  return cp;
}

Point exp_map(const VectorFieldSystem& sys, int field, double t, const Point& x, const FlowOptions& opt) {
  if (t == 0.0) {
    check_field(sys, field);
    return x;
  }
  return exp_map_certified(sys, field, t, x, opt).end;
}

Point apply_factors(const VectorFieldSystem& sys, const FactorList& factors, const Point& x, const FlowOptions& opt) {
  Point y = x;
  for (const auto& f : factors) y = exp_map(sys, f.field, f.time, y, opt);
  return y;
}

FactorList inverse_factors(const FactorList& factors) {
  FactorList out(factors.rbegin(), factors.rend());
  for (auto& f : out) f.time = -f.time;
  return out;
}

FactorList generalized_quasi_exp_factors(const MultiIndex& I, std::span<const double> times) {
  if (I.length() < 1) throw Error("quasi-exponential map needs a nonempty multiindex");
  if (static_cast<int>(times.size()) != I.length()) throw Error("one time per multiindex slot is required");
  const int head = I.idx[0];
  if (I.length() == 1) return {{head, times[0]}};
  MultiIndex tail(std::vector<int>(I.idx.begin() + 1, I.idx.end()));
  FactorList inner = generalized_quasi_exp_factors(tail, times.subspan(1));
  FactorList out;
  out.reserve(2 + 2 * inner.size());
  out.push_back({head, times[0]});
  out.insert(out.end(), inner.begin(), inner.end());
  out.push_back({head, -times[0]});
  FactorList inv = inverse_factors(inner);
  out.insert(out.end(), inv.begin(), inv.end());
  return out;
}

FactorList quasi_exp_factors(const MultiIndex& I, double t) {
  std::vector<double> times;
  for (int i : I.idx) times.push_back(i == 0 ? t * t : t);
  return generalized_quasi_exp_factors(I, times);
}

FactorList e_map_factors(const MultiIndex& I, double t) {
  if (t == 0.0) return {};
  double tau = std::pow(std::fabs(t), 1.0 / I.weight());
  FactorList f = quasi_exp_factors(I, tau);
  return t > 0 ? f : inverse_factors(f);
}

int factor_count(int length) { return length <= 1 ? 1 : 2 + 2 * factor_count(length - 1); }

Point quasi_exp(const VectorFieldSystem& sys, const MultiIndex& I, double t, const Point& x, const FlowOptions& opt) {
  return apply_factors(sys, quasi_exp_factors(I, t), x, opt);
}

Point e_map(const VectorFieldSystem& sys, const MultiIndex& I, double t, const Point& x, const FlowOptions& opt) {
  return apply_factors(sys, e_map_factors(I, t), x, opt);
}

double expansion_residual(const VectorFieldSystem& sys, const MultiIndex& I, const Point& x, double t,
                          const FlowOptions& opt) {
  if (!(t > 0)) throw Error("expansion residual needs t > 0");
  const double tw = std::pow(t, I.weight());
  Point y = quasi_exp(sys, I, t, x, opt);
  Point v = commutator_value(sys, I, x);
  return (y - x - tw * v).norm() / tw;
}

MixedDerivativeReport mixed_derivative_check(const VectorFieldSystem& sys, int i, int j, const Point& x, double step,
                                             const FlowOptions& opt) {
  check_field(sys, i);
  check_field(sys, j);
  for (int f : {i, j}) {
    if (sys.field(f).smooth.max_jet_order() < 2) {
      throw SmoothnessError("mixed-derivative check needs second derivatives of X" + std::to_string(f) + ", declared " +
                            sys.field(f).smooth.to_string());
    }
  }
  // Difference quotients divide by step^2; flows must be far below that.
  FlowOptions fo = opt;
  fo.tol = std::min(opt.tol, 1e-13);
  const double h = step;
  auto F = [&](double t, double s) { return apply_factors(sys, {{j, s}, {i, t}, {j, -s}, {i, -t}}, x, fo); };
  MixedDerivativeReport rep;
  rep.lhs = (F(h, h) - F(h, -h) - F(-h, h) + F(-h, -h)) / (4 * h * h);

  const int p = sys.dim();
  auto dflow = [&](int f, const Point& z) {
    return Point((exp_map(sys, f, h, z, fo) - exp_map(sys, f, -h, z, fo)) / (2 * h));
  };
  auto jac_dflow = [&](int f) {
    Mat M(p, p);
    for (int k = 0; k < p; ++k) {
      double hk = step * std::max(1.0, std::fabs(x[k]));
      Point a = x, b = x;
      a[k] += hk;
      b[k] -= hk;
      M.col(k) = (dflow(f, a) - dflow(f, b)) / (2 * hk);
    }
    return M;
  };
  Point vA = dflow(i, x), vB = dflow(j, x);
  rep.rhs = jac_dflow(i) * vB - jac_dflow(j) * vA;
  rep.residual = (rep.lhs - rep.rhs).norm();
  return rep;
}

// ---------------------------------------------------------------- charts

double ChartData::norm(const Point& h) const {
  double m = 0.0;
  for (int j = 0; j < static_cast<int>(eta.members.size()); ++j) {
    m = std::max(m, std::pow(std::fabs(h[j]), 1.0 / eta.members[j].weight()));
  }
  return m;
}

ChartData make_chart(const VectorFieldSystem& sys, const Point& x, const BasisFamily& eta, double radius,
                     const FlowOptions& flow) {
  if (static_cast<int>(eta.members.size()) != sys.dim()) throw Error("basis family must have dim members");
  ChartData cd;
  cd.sys = &sys;
  cd.x = x;
  cd.eta = eta;
  cd.jacobian = basis_matrix(sys, eta, x);
  cd.flow = flow;
  double scale = 1.0;
  for (int j = 0; j < cd.jacobian.cols(); ++j) scale *= std::max(cd.jacobian.col(j).norm(), 1e-300);
  if (std::fabs(cd.jacobian.determinant()) <= 1e-12 * scale) {
    throw RankError("chart family " + eta.to_string() + " is singular at " + format_point(x));
  }
  cd.radius = radius > 0 ? radius : 0.5 * sys.domain().distance_to_boundary(x);
  return cd;
}

FactorList chart_factors(const ChartData& cd, const Point& h) {
  FactorList out;
  for (int j = static_cast<int>(cd.eta.members.size()) - 1; j >= 0; --j) {
    FactorList f = e_map_factors(cd.eta.members[j], h[j]);
    out.insert(out.end(), f.begin(), f.end());
  }
  return out;
}

Point chart_forward(const ChartData& cd, const Point& h) { return apply_factors(*cd.sys, chart_factors(cd, h), cd.x, cd.flow); }

Point chart_inverse(const ChartData& cd, const Point& y, NewtonStats* stats) {
  const int p = static_cast<int>(cd.x.size());
  NewtonStats st;
  Point h = Point::Zero(p);
  const double dist = (y - cd.x).norm();
  if (dist == 0.0) {
    if (stats) *stats = st;
    return h;
  }
  if (dist > cd.radius) {
    throw ConvergenceError("target " + format_point(y) + " outside the chart neighborhood of " + format_point(cd.x), dist);
  }
  Eigen::PartialPivLU<Mat> lu0(cd.jacobian);
  h = lu0.solve(Point(y - cd.x));
  const double target = cd.flow.tol;

  auto residual = [&](const Point& hh, Point& r) -> bool {
    try {
      r = chart_forward(cd, hh) - y;
      return true;
    } catch (const DomainError&) {
      return false;
    }
  };
  Point r(p);
  if (!residual(h, r)) {
    h.setZero();
    r = cd.x - y;
  }
  double rn = r.norm();
  for (st.iterations = 0; st.iterations < 50 && rn > target; ++st.iterations) {
    Mat J(p, p);
    const double hinf = h.cwiseAbs().maxCoeff();
    for (int k = 0; k < p; ++k) {
      double dk = 1e-4 * std::max({std::fabs(h[k]), 1e-3 * hinf, 1e-12});
      Point a = h, b = h, ra(p), rb(p);
      a[k] += dk;
      b[k] -= dk;
      if (!residual(a, ra) || !residual(b, rb)) {
        throw ConvergenceError("chart Jacobian evaluation left the domain", rn);
      }
      J.col(k) = (ra - rb) / (2 * dk);
    }
    Eigen::PartialPivLU<Mat> lu(J);
    Point dh = lu.solve(Point(-r));
    if (!dh.allFinite()) throw ConvergenceError("singular chart Jacobian during inversion", rn);
    double lam = 1.0;
    bool improved = false;
    Point hn(p), rnew(p);
    for (int k = 0; k < 40; ++k, lam *= 0.5) {
      hn = h + lam * dh;
      if (residual(hn, rnew) && rnew.norm() < rn) {
        improved = true;
        break;
      }
    }
    if (!improved) break;
    h = hn;
    r = rnew;
    rn = r.norm();
    if (lam * dh.norm() < 1e-14 * std::max(1.0, h.norm())) break;
  }
  st.residual = rn;
  if (stats) *stats = st;
  if (rn > 10 * target) {
    throw ConvergenceError("chart inversion did not converge for target " + format_point(y) + " (residual " +
                               std::to_string(rn) + ")",
                           rn);
  }
  return h;
}

// ---------------------------------------------------------------- admissible controls

double piece_bound(const ControlPiece& piece, ControlNorm norm) {
  double lo = 0.0;
  for (const auto& t : piece.terms) lo = std::max(lo, std::pow(std::fabs(t.coeff), 1.0 / t.index.weight()));
  if (norm == ControlNorm::Box || lo == 0.0) return lo;
  const double m = static_cast<double>(piece.terms.size());
  double hi = 0.0;
  for (const auto& t : piece.terms) hi = std::max(hi, std::pow(std::sqrt(m) * std::fabs(t.coeff), 1.0 / t.index.weight()));
  auto g = [&](double d) {
    double s = 0.0;
    for (const auto& t : piece.terms) {
      double q = t.coeff / std::pow(d, t.index.weight());
      s += q * q;
    }
    return s;
  };
  for (int k = 0; k < 200 && hi - lo > 1e-15 * hi; ++k) {
    double mid = 0.5 * (lo + hi);
    (g(mid) <= 1.0 ? hi : lo) = mid;
  }
  return hi;
}

double schedule_bound(const ControlSchedule& s) {
  double b = 0.0;
  for (const auto& p : s.pieces) {
    if (p.end > p.begin) b = std::max(b, piece_bound(p, s.norm));
  }
  return b;
}

Trajectory admissible_solve(const VectorFieldSystem& sys, const ControlSchedule& schedule, const Point& x0,
                            const FlowOptions& opt) {
  Trajectory traj;
  traj.end = x0;
  traj.samples.push_back({0.0, x0, schedule.pieces.empty() ? -1 : 0});
  if (schedule.pieces.empty()) return traj;
  if (!sys.domain().contains(x0)) throw DomainError("start point " + format_point(x0) + " outside the domain");
  double expect = 0.0;
  for (const auto& pc : schedule.pieces) {
    if (std::fabs(pc.begin - expect) > 1e-12 || pc.end < pc.begin) {
      throw Error("control pieces must tile [0,1] in order without overlap");
    }
    expect = pc.end;
  }
  if (std::fabs(expect - 1.0) > 1e-12) throw Error("control pieces must end at s = 1");

  const int p = sys.dim();
  Point x = x0;
  for (int k = 0; k < static_cast<int>(schedule.pieces.size()); ++k) {
    const auto& pc = schedule.pieces[k];
    const double len = pc.end - pc.begin;
    if (len == 0.0) continue;
    struct Term {
      int kind;  // 0 base field, 1 canonical commutator, 2 generic
      int pos;
      double coeff;
      const MultiIndex* I;
    };
    std::vector<Term> terms;
    for (const auto& t : pc.terms) {
      if (t.index.weight() > sys.step()) throw Error("control term " + t.index.to_string() + " exceeds the step");
      if (t.index.length() == 1) {
        check_field(sys, t.index.idx[0]);
        terms.push_back({0, t.index.idx[0], t.coeff, &t.index});
      } else if (int pos = sys.commutator_position(t.index); pos >= 0) {
        terms.push_back({1, pos, t.coeff, &t.index});
      } else {
        terms.push_back({2, 0, t.coeff, &t.index});
      }
    }
    Point tmp(p);
    auto f = [&](const Point& y, Point& out) {
      out.setZero(p);
      for (const auto& t : terms) {
        if (t.coeff == 0.0) continue;
        if (t.kind == 0) {
          sys.field_fast(t.pos, y, tmp);
        } else if (t.kind == 1) {
          sys.commutator_fast(t.pos, y, tmp);
        } else {
          tmp = commutator_value(sys, *t.I, y);
        }
        out += t.coeff * tmp;
      }
    };
    OdeOptions o = ode_options(sys, opt);
    o.record_points = true;
    o.record_steps = opt.certify;
    OdeResult r = integrate_dp45(f, x, len, o);
    if (opt.certify) {
      double e = step_halving_error(f, x, len, r.steps);
      if (e > 10 * opt.tol) throw IntegrationError("step-halving error exceeds 10*tol on control piece " + std::to_string(k));
    }
    for (size_t m = 0; m < r.points.size(); ++m) traj.samples.push_back({pc.begin + r.times[m], r.points[m], k});
    x = r.end;
  }
  traj.end = x;
  traj.bound = schedule_bound(schedule);
  return traj;
}

void write_trajectory_csv(std::ostream& out, const Trajectory& traj) {
  const int p = traj.end.size();
  out << "s";
  for (int j = 1; j <= p; ++j) out << ",x" << j;
  out << ",piece\n";
  auto old = out.precision(17);
  for (const auto& s : traj.samples) {
    out << s.s;
    for (int j = 0; j < p; ++j) out << "," << s.x[j];
    out << "," << s.piece << "\n";
  }
  out.precision(old);
}

}  // namespace hvf
