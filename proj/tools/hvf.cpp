#include "hvf/certify.hpp"
#include "hvf/flows.hpp"
#include "hvf/inequality.hpp"
#include "hvf/metric.hpp"
#include "hvf/registry.hpp"
#include "hvf/report.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

using namespace hvf;

namespace {

struct Global {
  std::string system;
  uint64_t seed = 1;
  long budget = 200000;
  std::string out;
  std::string format = "json";
  int workers = 1;
  double tol = 1e-10;
  int steps = 16;
};

// Thrown for bad flag values; exits with status 2 like a parse failure.
struct UsageError : Error {
  using Error::Error;
};

Point parse_point(const std::string& text, int dim, const std::string& flag) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      size_t used = 0;
      v.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError(flag + ": '" + item + "' is not a number");
    }
  }
  if (static_cast<int>(v.size()) != dim) {
    throw UsageError(flag + " has " + std::to_string(v.size()) + " coordinates, system has " + std::to_string(dim));
  }
  Point x(dim);
  for (int i = 0; i < dim; ++i) x[i] = v[i];
  return x;
}

Point point_or_origin(const std::string& text, int dim, const std::string& flag) {
  return text.empty() ? Point::Zero(dim) : parse_point(text, dim, flag);
}

Flavor parse_flavor(const std::string& s) {
  if (s == "d") return Flavor::D;
  if (s == "d1") return Flavor::D1;
  throw UsageError("unknown flavor '" + s + "' (expected d or d1)");
}

std::vector<MultiIndex> indices_or_all(const std::vector<std::string>& given, const VectorFieldSystem& sys) {
  if (given.empty()) return sys.commutators();
  std::vector<MultiIndex> out;
  for (const auto& s : given) out.push_back(parse_multi_index(s));
  return out;
}

Json string_list(const std::vector<std::string>& v) {
  Json a = Json::array();
  for (const auto& s : v) a.push_back(s);
  return a;
}

Json factor_list(const FactorList& f) {
  Json a = Json::array();
  for (const auto& x : f) a.push_back({{"field", x.field}, {"time", number(x.time)}});
  return a;
}

double slope(const std::vector<double>& x, const std::vector<double>& y) {
  double mx = 0, my = 0;
  int n = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    if (!(y[i] > 0)) return std::nan("");
    mx += std::log(x[i]);
    my += std::log(y[i]);
    ++n;
  }
  if (n < 2) return std::nan("");
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    sxy += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
    sxx += (std::log(x[i]) - mx) * (std::log(x[i]) - mx);
  }
  return sxy / sxx;
}

// What one subcommand produces.
struct Outcome {
  Summary summary;
  std::optional<Table> table;
  std::vector<std::string> failures;
};

class Runner {
 public:
  explicit Runner(const Global& g) : g_(g) {}

  SystemPtr system() const {
    if (g_.system.empty()) throw UsageError("--system is required");
    return resolve_system(g_.system);
  }

  Summary base(const VectorFieldSystem& sys, const std::string& op) const {
    Summary s;
    s.system = sys.name();
    s.operation = op;
    s.seed = g_.seed;
    return s;
  }

  FlowOptions flow() const {
    FlowOptions f;
    f.tol = g_.tol;
    return f;
  }

  Resolution resolution() const {
    Resolution r;
    r.steps = g_.steps;
    return r;
  }

  Json resolution_json() const { return {{"steps", g_.steps}, {"flow_tol", g_.tol}}; }

  Outcome check(int per_side) const {
    auto sys = system();
    Outcome o{base(*sys, "check"), Table{{"point", "rank", "det", "family"}, {}}, {}};
    int full = 0, total = 0;
    for (const auto& x : grid_points(sys->working(), per_side)) {
      auto r = hormander_rank(*sys, x);
      o.table->add({format_point(x), r.rank, number(r.det), r.best.to_string()});
      ++total;
      if (r.rank == sys->dim()) {
        ++full;
      } else {
        o.failures.push_back("hormander rank " + std::to_string(r.rank) + " < " + std::to_string(sys->dim()) + " at " +
                             format_point(x));
      }
    }
    o.summary.parameters = {{"grid_per_side", per_side}};
    o.summary.estimate = {{"points", total}, {"full_rank", full}, {"commutators", sys->commutators().size()}};
    o.summary.resolution = {{"grid_per_side", per_side}};
    return o;
  }

  Outcome bracket(const std::vector<std::string>& idx, const std::vector<std::string>& points) const {
    auto sys = system();
    Outcome o{base(*sys, "bracket"), Table{{"index", "weight", "point", "value", "expression"}, {}}, {}};
    std::vector<Point> xs;
    for (const auto& p : points) xs.push_back(parse_point(p, sys->dim(), "--x"));
    if (xs.empty()) xs.push_back(Point::Zero(sys->dim()));
    Json rows = Json::array();
    for (const auto& I : indices_or_all(idx, *sys)) {
      std::string expr;
      if (int k = sys->commutator_position(I); k >= 0) {
        const auto& e = sys->commutator_expression(k);
        for (size_t j = 0; j < e.size(); ++j) expr += (j ? "; " : "") + hvf::to_string(e[j]);
      }
      for (const auto& x : xs) {
        Point v = commutator_value(*sys, I, x);
        o.table->add({I.to_string(), I.weight(), format_point(x), format_point(v), expr});
        rows.push_back({{"index", I.to_string()}, {"point", point_json(x)}, {"value", point_json(v)}});
      }
    }
    o.summary.estimate = {{"values", rows}};
    return o;
  }

  Outcome expand(const std::vector<std::string>& idx, const std::string& xtext, std::vector<double> ts) const {
    auto sys = system();
    Point x = point_or_origin(xtext, sys->dim(), "--x");
    if (ts.empty()) {
      for (int k = 3; k <= 10; ++k) ts.push_back(std::ldexp(1.0, -k));
    }
    Outcome o{base(*sys, "expand"), Table{{"index", "t", "residual"}, {}}, {}};
    Json fits = Json::object();
    for (const auto& I : indices_or_all(idx, *sys)) {
      std::vector<double> res;
      for (double t : ts) {
        res.push_back(expansion_residual(*sys, I, x, t, flow()));
        o.table->add({I.to_string(), t, number(res.back())});
      }
      fits[I.to_string()] = {{"residual", [&] {
                                Json a = Json::array();
                                for (double r : res) a.push_back(number(r));
                                return a;
                              }()},
                             {"slope", number(slope(ts, res))}};
    }
    o.summary.parameters = {{"x", point_json(x)}, {"t", ts}};
    o.summary.estimate = fits;
    o.summary.resolution = resolution_json();
    return o;
  }

  Outcome flow_cmd(const std::string& index, double t, const std::string& xtext, bool quasi) const {
    auto sys = system();
    Point x = point_or_origin(xtext, sys->dim(), "--x");
    MultiIndex I = parse_multi_index(index);
    FactorList factors;
    if (quasi) {
      factors = quasi_exp_factors(I, t);
    } else {
      if (I.length() != 1) throw UsageError("exp takes a single field; pass --quasi for a commutator index");
      factors = {{I.idx[0], t}};
    }
    AdmissiblePath p;
    p.start = x;
    p.segments = factors;
    p.bound = factor_bound(factors);
    Trajectory traj = admissible_solve(*sys, path_schedule(p), x, flow());
    Outcome o{base(*sys, quasi ? "quasi_exp" : "exp"), Table{{"s", "piece"}, {}}, {}};
    for (int j = 1; j <= sys->dim(); ++j) o.table->columns.push_back("x" + std::to_string(j));
    for (const auto& s : traj.samples) {
      std::vector<Json> row = {s.s, s.piece};
      for (int j = 0; j < sys->dim(); ++j) row.push_back(s.x[j]);
      o.table->add(row);
    }
    Point direct = apply_factors(*sys, factors, x, flow());
    o.summary.parameters = {{"index", I.to_string()}, {"t", t}, {"x", point_json(x)}};
    o.summary.estimate = {{"end", point_json(direct)},
                          {"trajectory_end", point_json(traj.end)},
                          {"factors", factor_list(factors)},
                          {"control_bound", number(p.bound)}};
    o.summary.resolution = resolution_json();
    const double gap = (direct - traj.end).norm();
    if (!(gap <= 10 * g_.tol * std::max(1.0, direct.norm()) + 1e-9)) {
      o.failures.push_back("trajectory end differs from the composed flows by " + std::to_string(gap));
    }
    return o;
  }

  Outcome dist(const std::string& xs, const std::string& ys, const std::string& flavor) const {
    auto sys = system();
    Point x = parse_point(xs, sys->dim(), "--x");
    Point y = parse_point(ys, sys->dim(), "--y");
    Outcome o{base(*sys, "dist"), std::nullopt, {}};
    Json est = Json::object();
    UpperOptions uo;
    uo.flow = flow();
    auto up = d1_upper(*sys, x, y, uo);
    est["d1_upper"] = {{"lower", number(up.lower)},
                       {"upper", number(up.upper)},
                       {"lower_method", up.lower_method},
                       {"upper_method", up.upper_method},
                       {"witness", factor_list(up.witness.segments)}};
    Resolution res = resolution();
    if (flavor == "d1" || flavor == "both") {
      auto g = d1_graph(*sys, x, y, res);
      est["d1_graph"] = {{"value", number(g.value)}, {"tau", g.tau}, {"cells", g.cells}};
    }
    if (flavor == "d" || flavor == "both") {
      auto g = d_graph(*sys, x, y, res);
      est["d_graph"] = {{"value", number(g.value)}, {"tau", g.tau}, {"cells", g.cells}};
    }
    if (flavor != "d" && flavor != "d1" && flavor != "both") throw UsageError("--flavor must be d, d1 or both");
    auto eb = euclid_bracket(*sys, x, y);
    est["euclid_bracket"] = {{"lower", number(eb.lower)}, {"upper", number(eb.upper)}};
    o.summary.parameters = {{"x", point_json(x)}, {"y", point_json(y)}, {"flavor", flavor}};
    o.summary.estimate = est;
    o.summary.resolution = resolution_json();
    return o;
  }

  Outcome connect_cmd(const std::string& xs, const std::string& ys) const {
    auto sys = system();
    Point x = parse_point(xs, sys->dim(), "--x");
    Point y = parse_point(ys, sys->dim(), "--y");
    ConnectOptions co;
    co.flow = flow();
    AdmissiblePath p = connect(*sys, x, y, co);
    SubunitPath sp = subunit_reparametrize(p);
    const double miss = (reintegrate(*sys, p, flow()) - y).norm();
    const double smiss = (integrate_subunit(*sys, sp, flow()) - y).norm();
    Outcome o{base(*sys, "connect"), Table{{"field", "sign", "begin", "end"}, {}}, {}};
    for (const auto& s : sp.segments) o.table->add({s.field, s.sign, s.begin, s.end});
    o.summary.parameters = {{"x", point_json(x)}, {"y", point_json(y)}};
    o.summary.estimate = {{"bound", number(p.bound)},
                          {"charts", p.charts},
                          {"segments", p.segments.size()},
                          {"segment_limit", p.segment_limit},
                          {"hitting_time", number(sp.hitting_time)},
                          {"witness_miss", number(miss)},
                          {"subunit_miss", number(smiss)},
                          {"factors", factor_list(p.segments)}};
    o.summary.resolution = resolution_json();
    if (!(miss <= 10 * g_.tol)) o.failures.push_back("witness misses the target by " + std::to_string(miss));
    if (!(smiss <= 10 * g_.tol)) o.failures.push_back("subunit path misses the target by " + std::to_string(smiss));
    return o;
  }

  Outcome ball(const std::string& x0s, std::vector<double> rhos, const std::string& flavor_text, const std::string& method,
               bool inclusion) const {
    auto sys = system();
    Point x0 = point_or_origin(x0s, sys->dim(), "--x0");
    Flavor flavor = parse_flavor(flavor_text);
    if (rhos.empty()) rhos = {0.125, 0.0625, 0.03125};
    BallOptions bo;
    bo.seed = g_.seed;
    bo.budget = g_.budget;
    bo.res = resolution();
    if (method == "sampling") {
      bo.method = BallMethod::Sampling;
    } else if (method != "flood") {
      throw UsageError("--method must be flood or sampling");
    }
    std::map<double, BallEstimate> cache;
    auto volume = [&](double r) -> const BallEstimate& {
      auto it = cache.find(r);
      if (it == cache.end()) it = cache.emplace(r, ball_volume(*sys, x0, r, flavor, bo)).first;
      return it->second;
    };
    Outcome o{base(*sys, "ball"),
              Table{{"rho", "volume", "ci_low", "ci_high", "doubling", "formula_ratio", "c1", "c2"}, {}},
              {}};
    std::vector<double> vols, formula;
    for (double r : rhos) {
      const auto& b = volume(r);
      const double dbl = volume(2 * r).volume / b.volume;
      const double fr = b.volume / volume_formula_denominator(*sys, x0, r);
      Json c1 = nullptr, c2 = nullptr;
      if (inclusion) {
        auto inc = ball_inclusion_check(*sys, x0, r, resolution());
        c1 = number(inc.c1);
        c2 = number(inc.c2);
      }
      o.table->add({r, number(b.volume), number(b.ci_low), number(b.ci_high), number(dbl), number(fr), c1, c2});
      vols.push_back(b.volume);
      formula.push_back(fr);
    }
    auto [lo, hi] = std::minmax_element(formula.begin(), formula.end());
    o.summary.parameters = {{"x0", point_json(x0)}, {"rho", rhos}, {"flavor", flavor_text}, {"method", method}};
    o.summary.estimate = {{"volume_exponent", number(slope(rhos, vols))}, {"formula_band", number(*hi / *lo)}};
    o.summary.resolution = resolution_json();
    return o;
  }

  Outcome poincare(const std::string& fname, const std::string& x0s, std::vector<double> rhos, double lambda,
                   double p) const {
    auto sys = system();
    Point x0 = point_or_origin(x0s, sys->dim(), "--x0");
    const auto& u = sys->function(fname);
    if (rhos.empty()) rhos = {0.125, 0.0625, 0.03125, 0.015625};
    IntegralOptions io;
    io.samples = g_.budget;
    io.seed = g_.seed;
    io.workers = g_.workers;
    io.res = resolution();
    Outcome o{base(*sys, p > 0 ? "p_poincare" : "poincare"),
              Table{{"rho", "lhs", "rhs", "implied_constant", "ball_volume", "inside", "samples"}, {}},
              {}};
    std::vector<double> cs;
    for (double r : rhos) {
      BallIntegrator bi(*sys, x0, r, p > 0 ? 1.0 : lambda, io);
      InequalityReport rep = p > 0 ? bi.p_poincare(u, p) : bi.poincare(u);
      o.table->add({r, number(rep.lhs), number(rep.rhs), number(rep.implied_constant), number(rep.ball_volume),
                    rep.inside, rep.samples});
      cs.push_back(rep.implied_constant);
    }
    auto [lo, hi] = std::minmax_element(cs.begin(), cs.end());
    o.summary.parameters = {{"function", fname}, {"x0", point_json(x0)}, {"rho", rhos}, {"lambda", p > 0 ? 1.0 : lambda}};
    if (p > 0) o.summary.parameters["p"] = p;
    o.summary.estimate = {{"max_constant", number(*hi)}, {"spread", number(*hi / *lo)}};
    o.summary.resolution = resolution_json();
    return o;
  }

  Outcome sobolev(const std::string& fname, const std::string& x0s, double rho, double p, int levels) const {
    auto sys = system();
    Point x0 = point_or_origin(x0s, sys->dim(), "--x0");
    SobolevOptions so;
    so.levels = levels;
    so.budget = g_.budget;
    so.res = resolution();
    auto r = sobolev_exponent(*sys, sys->function(fname), x0, rho, p, so);
    Outcome o{base(*sys, "sobolev"), Table{{"rho", "volume"}, {}}, {}};
    for (double k : r.k_grid) o.table->columns.push_back("ratio_k" + [k] {
      std::ostringstream s;
      s << k;
      return s.str();
    }());
    for (const auto& row : r.rows) {
      std::vector<Json> cells = {row.rho, number(row.volume)};
      for (double v : row.ratio) cells.push_back(number(v));
      o.table->add(cells);
    }
    Json sl = Json::array();
    for (double v : r.slope) sl.push_back(number(v));
    o.summary.parameters = {{"function", fname}, {"x0", point_json(x0)}, {"rho", rho}, {"p", p}, {"levels", levels}};
    o.summary.estimate = {{"k", r.k}, {"cap", r.cap}, {"k_grid", r.k_grid}, {"slope", sl}};
    o.summary.resolution = resolution_json();
    return o;
  }

  Outcome lagrange(const std::string& fname, const std::string& x0s, const std::string& xs, double rho) const {
    auto sys = system();
    Point x0 = parse_point(x0s, sys->dim(), "--x0");
    Point x = parse_point(xs, sys->dim(), "--x");
    ConnectOptions co;
    co.flow = flow();
    if (rho <= 0) rho = connect(*sys, x0, x, co).bound;
    auto r = lagrange_check(*sys, sys->function(fname), x0, rho, x, co);
    Outcome o{base(*sys, "lagrange"), std::nullopt, {}};
    o.summary.parameters = {{"function", fname}, {"x0", point_json(x0)}, {"x", point_json(x)}, {"rho", rho}};
    o.summary.estimate = {{"lhs", number(r.lhs)},         {"rhs", number(r.rhs)},   {"rho_hat", number(r.rho_hat)},
                          {"segments", r.segments},       {"slack", r.slack},       {"holds", r.holds}};
    o.summary.resolution = resolution_json();
    if (!r.holds) {
      o.failures.push_back("lagrange bound fails: |f(x) - f(x0)| = " + std::to_string(r.lhs) + " > " +
                           std::to_string(r.rhs));
    }
    return o;
  }

  Outcome certify_cmd(const std::vector<std::string>& systems, const std::vector<int>& criteria, Json& timings) const {
    CertifyOptions opt;
    opt.seed = g_.seed;
    opt.budget = g_.budget;
    opt.workers = g_.workers;
    opt.systems = systems;
    opt.criteria = criteria;
    for (int c : criteria) {
      if (c < 1 || c > kCriterionCount) throw UsageError("--criteria entries must be in 1.." + std::to_string(kCriterionCount));
    }
    auto rep = certify(opt, [](const CriterionResult& r) {
      std::cerr << r.id << " " << r.name << ": " << r.status << "\n";
    });
    Outcome o{rep.summary(opt), Table{{"id", "name", "status", "failures"}, {}}, {}};
    for (const auto& r : rep.results) {
      o.table->add({r.id, r.name, r.status, r.failures.size()});
      for (const auto& f : r.failures) o.failures.push_back("criterion " + std::to_string(r.id) + ": " + f);
    }
    timings = rep.timings();
    return o;
  }

 private:
  const Global& g_;
};

int emit(const Global& g, const std::string& stem, Outcome o, const Json* timings = nullptr) {
  if (!o.failures.empty()) o.summary.estimate["failures"] = string_list(o.failures);
  o.summary.parameters["budget"] = g.budget;
  if (!g.out.empty()) {
    auto written = write_report(g.out, stem, o.summary, o.table ? &*o.table : nullptr, parse_format(g.format));
    if (timings) {
      std::string path = (std::filesystem::path(g.out) / (stem + "_timings.json")).string();
      std::ofstream(path) << timings->dump(2) << "\n";
      written.push_back(path);
    }
    for (const auto& w : written) std::cerr << "wrote " << w << "\n";
  }
  std::cout << dump_summary(o.summary);
  return o.failures.empty() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Geometry of Hormander vector fields: commutators, distances, balls and inequality checks"};
  app.require_subcommand(1);
  Global g;
  app.add_option("--system", g.system, "System file, or a registered name")
      ->check([](const std::string& s) -> std::string { return s.empty() ? "empty system" : ""; });
  app.add_option("--seed", g.seed, "Root seed")->capture_default_str();
  app.add_option("--budget", g.budget, "Monte Carlo samples per estimate")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--out", g.out, "Directory for report files");
  app.add_option("--format", g.format, "Report format")->check(CLI::IsMember({"csv", "json", "both"}))->capture_default_str();
  app.add_option("--workers", g.workers, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--tol", g.tol, "Flow integration tolerance")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--steps", g.steps, "Graph resolution: steps per distance scale")
      ->check(CLI::Range(2, 4096))
      ->capture_default_str();

  Runner run(g);
  std::function<Outcome()> action;
  std::string stem;
  Json timings;
  bool with_timings = false;

  auto sub = [&](const std::string& name, const std::string& help) {
    auto* s = app.add_subcommand(name, help);
    s->fallthrough();
    return s;
  };

  int per_side = 5;
  auto* check = sub("check", "Hormander rank on a grid of the working box");
  check->add_option("--grid", per_side, "Points per side")->check(CLI::Range(1, 64))->capture_default_str();
  check->callback([&] { action = [&] { return run.check(per_side); }; stem = "check"; });

  std::vector<std::string> indices, points;
  auto* bracket = sub("bracket", "Commutator values and symbolic coefficients");
  bracket->add_option("--index", indices, "Multiindex such as (1,2); default: the canonical list");
  bracket->add_option("--x", points, "Evaluation point x1,...,xp (repeatable); default: origin");
  bracket->callback([&] { action = [&] { return run.bracket(indices, points); }; stem = "bracket"; });

  std::string x, y, x0;
  std::vector<double> ts;
  auto* expand = sub("expand", "Expansion residual of C_l(t) against t^{|I|} X_[I]");
  expand->add_option("--index", indices, "Multiindex; default: the canonical list");
  expand->add_option("--x", x, "Base point; default: origin");
  expand->add_option("--t", ts, "Times; default 2^-3..2^-10")->delimiter(',');
  expand->callback([&] { action = [&] { return run.expand(indices, x, ts); }; stem = "expand"; });

  std::string index = "(1)";
  double t = 0.1;
  bool quasi = false;
  auto* flow = sub("flow", "exp(t X_i) or the quasi-exponential C_l(t), with trajectory export");
  flow->add_option("--index", index, "Field index (1) or multiindex with --quasi")->capture_default_str();
  flow->add_option("--time", t, "Flow time")->capture_default_str();
  flow->add_option("--x", x, "Start point; default: origin");
  flow->add_flag("--quasi", quasi, "Quasi-exponential of the multiindex");
  flow->callback([&] { action = [&] { return run.flow_cmd(index, t, x, quasi); }; stem = "flow"; });

  std::string flavor = "both";
  auto* dist = sub("dist", "Distance estimates with a witness path");
  dist->add_option("--x", x, "First point")->required();
  dist->add_option("--y", y, "Second point")->required();
  dist->add_option("--flavor", flavor, "d, d1 or both")->capture_default_str();
  dist->callback([&] { action = [&] { return run.dist(x, y, flavor); }; stem = "dist"; });

  auto* conn = sub("connect", "Admissible path from x to y and its subunit form");
  conn->add_option("--x", x, "Start")->required();
  conn->add_option("--y", y, "Target")->required();
  conn->callback([&] { action = [&] { return run.connect_cmd(x, y); }; stem = "connect"; });

  std::vector<double> rhos;
  std::string method = "flood";
  std::string ball_flavor = "d1";
  bool inclusion = false;
  auto* ball = sub("ball", "Ball volumes, doubling ratios, volume-formula ratios and inclusion constants");
  ball->add_option("--x0", x0, "Center; default: origin");
  ball->add_option("--rho", rhos, "Radii; default 2^-3..2^-5")->delimiter(',');
  ball->add_option("--flavor", ball_flavor, "d or d1")->capture_default_str();
  ball->add_option("--method", method, "flood or sampling")->capture_default_str();
  ball->add_flag("--inclusion", inclusion, "Also compare with the Taylor-system balls");
  ball->callback([&] { action = [&] { return run.ball(x0, rhos, ball_flavor, method, inclusion); }; stem = "ball"; });

  std::string fname;
  double lambda = 2.0, p = 0.0;
  auto* poin = sub("poincare", "Implied Poincare constants over a radius sweep");
  poin->add_option("--function", fname, "Registered test function")->required();
  poin->add_option("--x0", x0, "Center; default: origin");
  poin->add_option("--rho", rhos, "Radii; default 2^-3..2^-6")->delimiter(',');
  poin->add_option("--lambda", lambda, "Enlargement of the right-hand ball")->check(CLI::Range(1.0, 16.0))->capture_default_str();
  poin->add_option("--p", p, "Exponent for the p-Poincare form (both sides on B)")->check(CLI::Range(1.0, 64.0));
  poin->callback([&] { action = [&] { return run.poincare(fname, x0, rhos, lambda, p); }; stem = "poincare"; });

  double rho = 0.0625, sp = 1.0;
  int levels = 4;
  auto* sob = sub("sobolev", "Largest Sobolev gain exponent for a compactly supported function");
  sob->add_option("--function", fname, "Test function with a declared support")->required();
  sob->add_option("--x0", x0, "Center; default: origin");
  sob->add_option("--rho", rho, "Smallest radius")->capture_default_str();
  sob->add_option("--p", sp, "Exponent")->check(CLI::Range(1.0, 64.0))->capture_default_str();
  sob->add_option("--levels", levels, "Dyadic radii")->check(CLI::Range(2, 12))->capture_default_str();
  sob->callback([&] { action = [&] { return run.sobolev(fname, x0, rho, sp, levels); }; stem = "sobolev"; });

  double lrho = 0.0;
  auto* lag = sub("lagrange", "Mean-value bound along a connecting path");
  lag->add_option("--function", fname, "Registered test function")->required();
  lag->add_option("--x0", x0, "Base point")->required();
  lag->add_option("--x", x, "End point")->required();
  lag->add_option("--rho", lrho, "Radius; default: the control bound of the path");
  lag->callback([&] { action = [&] { return run.lagrange(fname, x0, x, lrho); }; stem = "lagrange"; });

  std::vector<int> criteria;
  auto* cert = sub("certify", "Run the acceptance suite; --system restricts it to registered systems");
  cert->add_option("--criteria", criteria, "Criterion ids 1..14; default: all")->delimiter(',');
  cert->callback([&] {
    action = [&] {
      std::vector<std::string> systems;
      if (!g.system.empty()) {
        std::stringstream ss(g.system);
        for (std::string s; std::getline(ss, s, ',');) systems.push_back(s);
      }
      return run.certify_cmd(systems, criteria, timings);
    };
    stem = "certify";
    with_timings = true;
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    Outcome o = action();
    return emit(g, stem, std::move(o), with_timings ? &timings : nullptr);
  } catch (const UsageError& e) {
    std::cerr << Json({{"error", "usage"}, {"message", e.what()}}).dump() << "\n";
    return 2;
  } catch (const ParseError& e) {
    std::cerr << Json({{"error", "parse"}, {"message", e.what()}, {"line", e.line()}, {"column", e.column()}}).dump() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << Json({{"error", "runtime"}, {"operation", stem}, {"message", e.what()}}).dump() << "\n";
    return 1;
  }
}
