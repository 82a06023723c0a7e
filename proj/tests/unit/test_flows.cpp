#include "doctest.h"

#include "hvf/flows.hpp"
#include "hvf/registry.hpp"
#include "support.hpp"

#include <cmath>
#include <random>
#include <sstream>

using namespace hvf;
using namespace hvf::testing;

namespace {

// Grushin on a wide box so the textbook example points are admissible.
SystemPtr wide_grushin() {
  static SystemPtr s = parse_system(R"(dim = 2
nfields = 2
step = 2
domain = [-20,20]x[-20,20]
field 1 smooth Cinf: 1 ; 0
field 2 smooth Cinf: 0 ; x1
)",
                                    "grushin_wide");
  return s;
}

double max_abs(const Point& v) { return v.cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("exp_map closed forms and reversibility") {
  auto g = wide_grushin();
  CHECK(max_abs(exp_map(*g, 1, 1.0, pt({0, 0})) - pt({1, 0})) < 1e-12);
  CHECK(max_abs(exp_map(*g, 2, 2.0, pt({3, 5})) - pt({3, 11})) < 1e-9);
  Point x = pt({0.7, -1.1});
  Point y = exp_map(*g, 2, 0.8, exp_map(*g, 1, -1.3, x));
  Point back = exp_map(*g, 1, 1.3, exp_map(*g, 2, -0.8, y));
  CHECK(max_abs(back - x) < 1e-9);
  CHECK(exp_map(*g, 1, 0.0, x) == x);
}

TEST_CASE("exp_map group law") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> tt(-0.4, 0.4);
  for (const char* name : {"grushin", "grushin_c11", "heisenberg", "heisenberg_c11", "martinet"}) {
    auto sys = builtin_system(name);
    for (int k = 0; k < 20; ++k) {
      Point x = random_point(rng, sys->working());
      double s = tt(rng), t = tt(rng);
      for (int i : sys->field_indices()) {
        Point a = exp_map(*sys, i, s, exp_map(*sys, i, t, x));
        Point b = exp_map(*sys, i, s + t, x);
        CHECK(max_abs(a - b) < 1e-8);
      }
    }
  }
}

TEST_CASE("exp_map errors and certification") {
  auto g = builtin_system("grushin");
  CHECK_THROWS_AS(exp_map(*g, 1, 5.0, pt({0, 0})), DomainError);
  CHECK_THROWS_AS(exp_map(*g, 3, 1.0, pt({0, 0})), Error);
  FlowOptions fo;
  fo.certify = true;
  auto m = builtin_system("martinet");
  auto cp = exp_map_certified(*m, 2, 0.9, pt({0.5, -0.2, 0.1}), fo);
  CHECK(cp.error_estimate <= 10 * fo.tol);
  // x3 gains t * x1^2 along X2.
  CHECK(std::fabs(cp.end[2] - (0.1 + 0.9 * 0.25)) < 1e-10);
}

TEST_CASE("factor lists") {
  CHECK(factor_count(1) == 1);
  CHECK(factor_count(2) == 4);
  CHECK(factor_count(3) == 10);
  auto f = quasi_exp_factors(MultiIndex{1, 2}, 0.5);
  REQUIRE(f.size() == 4);
  CHECK(f[0].field == 1);
  CHECK(f[0].time == 0.5);
  CHECK(f[1].field == 2);
  CHECK(f[2].time == -0.5);
  CHECK(f[3].time == -0.5);
  CHECK(quasi_exp_factors(MultiIndex{1, 1, 2}, 0.3).size() == 10);
  // Drift slots get t^2.
  auto d = quasi_exp_factors(MultiIndex{0, 1}, 0.5);
  CHECK(d[0].time == 0.25);
  CHECK(e_map_factors(MultiIndex{1, 2}, 0.0).empty());
  auto neg = e_map_factors(MultiIndex{1, 2}, -0.25);
  CHECK(neg[0].field == 2);
  CHECK(neg[0].time == 0.5);
}

TEST_CASE("quasi_exp closed forms") {
  auto g = builtin_system("grushin");
  auto h = builtin_system("heisenberg");
  auto e = builtin_system("euclid2");
  for (double t : {0.05, 0.2, 0.5}) {
    CHECK(max_abs(quasi_exp(*g, MultiIndex{1, 2}, t, pt({0, 0})) - pt({0, t * t})) < 1e-10);
    CHECK(max_abs(quasi_exp(*g, MultiIndex{1, 2}, t, pt({0.3, -0.4})) - pt({0.3, -0.4 + t * t})) < 1e-10);
    CHECK(max_abs(quasi_exp(*h, MultiIndex{1, 2}, t, pt({0, 0, 0})) - pt({0, 0, t * t})) < 1e-10);
    CHECK(max_abs(quasi_exp(*e, MultiIndex{1, 2}, t, pt({0.1, 0.2})) - pt({0.1, 0.2})) < 1e-12);
  }
  CHECK(quasi_exp(*h, MultiIndex{1, 2}, 0.0, pt({0.1, 0.2, 0.3})) == pt({0.1, 0.2, 0.3}));
}

TEST_CASE("e_map on heisenberg") {
  auto h = builtin_system("heisenberg");
  Point o = pt({0, 0, 0});
  for (double c : {0.3, 0.01, 1e-4}) {
    CHECK(max_abs(e_map(*h, MultiIndex{1, 2}, c, o) - pt({0, 0, c})) < 1e-10);
    CHECK(max_abs(e_map(*h, MultiIndex{1, 2}, -c, o) - pt({0, 0, -c})) < 1e-10);
  }
  CHECK(e_map(*h, MultiIndex{1, 2}, 0.0, pt({0.1, 0.2, 0.3})) == pt({0.1, 0.2, 0.3}));
}

TEST_CASE("generalized quasi-exponential is the identity when a slot is zero") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> tt(-0.3, 0.3);
  for (const char* name : {"grushin", "heisenberg", "martinet", "heisenberg_c11"}) {
    auto sys = builtin_system(name);
    for (const auto& I : sys->commutators()) {
      if (I.length() < 2) continue;
      Point x = random_point(rng, sys->working());
      for (int slot = 0; slot < I.length(); ++slot) {
        std::vector<double> times;
        for (int k = 0; k < I.length(); ++k) times.push_back(k == slot ? 0.0 : tt(rng));
        Point y = apply_factors(*sys, generalized_quasi_exp_factors(I, times), x);
        CHECK(max_abs(y - x) < 1e-9);
      }
    }
  }
}

TEST_CASE("mixed partial of the generalized map equals the commutator") {
  std::mt19937_64 rng(8);
  FlowOptions fo;
  fo.tol = 1e-14;
  for (const char* name : {"grushin", "heisenberg", "martinet"}) {
    auto sys = builtin_system(name);
    for (const auto& I : sys->commutators()) {
      if (I.length() < 2) continue;
      const int l = I.length();
      const double h = l == 2 ? 1e-4 : 1e-3;
      Point x = random_point(rng, sys->working());
      Point acc = Point::Zero(sys->dim());
      for (int mask = 0; mask < (1 << l); ++mask) {
        std::vector<double> times(l);
        int minus = 0;
        for (int k = 0; k < l; ++k) {
          bool neg = mask >> k & 1;
          times[k] = neg ? -h : h;
          minus += neg;
        }
        Point y = apply_factors(*sys, generalized_quasi_exp_factors(I, times), x, fo);
        acc += (minus % 2 ? -1.0 : 1.0) * y;
      }
      acc /= std::pow(2 * h, l);
      Point want = commutator_value(*sys, I, x);
      CHECK_MESSAGE(max_abs(acc - want) < 1e-4, name << " " << I.to_string());
    }
  }
}

TEST_CASE("expansion residual") {
  auto h = builtin_system("heisenberg");
  auto g = builtin_system("grushin");
  std::mt19937_64 rng(3);
  for (double t : {1e-1, 1e-2}) {
    CHECK(expansion_residual(*h, MultiIndex{1, 2}, pt({0, 0, 0}), t) <= 1e-7);
    CHECK(expansion_residual(*g, MultiIndex{1, 2}, pt({0, 0}), t) <= 1e-7);
    CHECK(expansion_residual(*h, MultiIndex{1, 2}, random_point(rng, h->working()), t) <= 1e-7);
  }
  auto m = builtin_system("martinet");
  // C_3 reproduces x + 2 t^3 e3 exactly for (1,1,2).
  for (int k = 3; k <= 10; ++k) CHECK(expansion_residual(*m, MultiIndex{1, 1, 2}, pt({0, 0, 0}), std::ldexp(1.0, -k)) <= 1e-7);
  // For (1,2) at (a,0,0): C_2(t) adds 2 a t^2 + t^3, so the residual is exactly t.
  std::vector<double> ts, rs;
  for (int k = 3; k <= 10; ++k) {
    double t = std::ldexp(1.0, -k);
    double r = expansion_residual(*m, MultiIndex{1, 2}, pt({0.3, 0, 0}), t);
    CHECK(std::fabs(r - t) < 1e-6);
    ts.push_back(t);
    rs.push_back(r);
  }
  CHECK(slope(ts, rs) >= 0.9);
}

TEST_CASE("expansion residual decays on every registered system") {
  for (const auto& name : builtin_names()) {
    auto sys = builtin_system(name);
    Point x = sys->working().center() + 0.1 * Point::Ones(sys->dim());
    for (const auto& I : sys->commutators()) {
      double prev = INFINITY;
      for (int k = 2; k <= 8; ++k) {
        double r = expansion_residual(*sys, I, x, std::ldexp(1.0, -k));
        CHECK_MESSAGE(r <= std::max(prev, 1e-9) * 1.0000001, name << " " << I.to_string() << " k=" << k);
        prev = r;
      }
    }
  }
}

TEST_CASE("mixed derivative identity") {
  auto h = builtin_system("heisenberg");
  auto rep = mixed_derivative_check(*h, 1, 2, pt({0, 0, 0}));
  CHECK(rep.residual <= 1e-5);
  // The conjugated composition yields -[X1, X2].
  CHECK(max_abs(rep.lhs - pt({0, 0, -1})) < 1e-5);
  CHECK(max_abs(rep.rhs - pt({0, 0, -1})) < 1e-5);
  auto e = builtin_system("euclid2");
  auto c = mixed_derivative_check(*e, 1, 2, pt({0.2, 0.3}));
  CHECK(max_abs(c.lhs) < 1e-6);
  CHECK(max_abs(c.rhs) < 1e-6);
  auto same = mixed_derivative_check(*h, 2, 2, pt({0.2, 0.3, -0.1}));
  CHECK(max_abs(same.lhs) < 1e-6);
  CHECK(max_abs(same.rhs) < 1e-6);

  std::mt19937_64 rng(21);
  for (const auto& name : builtin_names()) {
    auto sys = builtin_system(name);
    for (int k = 0; k < 20; ++k) {
      Point x = random_point(rng, sys->working());
      auto r = mixed_derivative_check(*sys, 1, 2, x);
      CHECK_MESSAGE(r.residual <= 1e-4, name << " at " << format_point(x));
      Point br = commutator_value(*sys, MultiIndex{1, 2}, x);
      CHECK(max_abs(r.rhs + br) < 1e-4);
    }
  }
  auto lin = parse_system("dim = 1\nnfields = 1\nstep = 2\ndomain = [-1,1]\nfield 1 smooth C1: abs(x1)\n");
  CHECK_THROWS_AS(mixed_derivative_check(*lin, 1, 1, pt({0.5})), SmoothnessError);
}

TEST_CASE("heisenberg chart") {
  auto h = builtin_system("heisenberg");
  BasisFamily eta{{MultiIndex{1}, MultiIndex{2}, MultiIndex{1, 2}}};
  Point o = pt({0, 0, 0});
  auto cd = make_chart(*h, o, eta);
  CHECK(std::fabs(std::fabs(cd.jacobian.determinant()) - std::fabs(lambda(*h, eta, o))) < 1e-12);
  CHECK(chart_forward(cd, pt({0, 0, 0})) == o);
  CHECK(max_abs(chart_forward(cd, pt({0.2, 0, 0})) - pt({0.2, 0, 0})) < 1e-12);
  CHECK(max_abs(chart_forward(cd, pt({0, 0, 0.04})) - pt({0, 0, 0.04})) < 1e-10);
  CHECK(max_abs(chart_inverse(cd, pt({0, 0, 0.04})) - pt({0, 0, 0.04})) < 1e-9);
  CHECK(chart_inverse(cd, o) == Point::Zero(3));
  CHECK_THROWS_AS(chart_inverse(cd, pt({0, 0, 1.5})), ConvergenceError);
  CHECK(cd.norm(pt({0.1, -0.2, 0.09})) == doctest::Approx(0.3));
}

TEST_CASE("chart round trip") {
  struct Case {
    const char* name;
    BasisFamily eta;
    Point x;
  };
  std::vector<Case> cases = {
      {"heisenberg", {{MultiIndex{1}, MultiIndex{2}, MultiIndex{1, 2}}}, pt({0.1, -0.2, 0.3})},
      {"grushin", {{MultiIndex{1}, MultiIndex{1, 2}}}, pt({0, 0})},
      {"grushin", {{MultiIndex{1}, MultiIndex{2}}}, pt({0.6, 0.1})},
      {"martinet", {{MultiIndex{1}, MultiIndex{2}, MultiIndex{1, 1, 2}}}, pt({0, 0, 0})},
      {"heisenberg_c11", {{MultiIndex{1}, MultiIndex{2}, MultiIndex{1, 2}}}, pt({0, 0, 0})},
  };
  std::mt19937_64 rng(17);
  for (const auto& c : cases) {
    auto sys = builtin_system(c.name);
    auto cd = make_chart(*sys, c.x, c.eta);
    const double box = 0.2;  // ||h||_eta <= box
    int n = 0;
    for (int k = 0; k < 100; ++k) {
      Point hh(sys->dim());
      for (int j = 0; j < sys->dim(); ++j) {
        double w = c.eta.members[j].weight();
        hh[j] = std::uniform_real_distribution<double>(-1, 1)(rng) * std::pow(box, w);
      }
      Point y = chart_forward(cd, hh);
      NewtonStats st;
      Point back = chart_inverse(cd, y, &st);
      CHECK_MESSAGE(max_abs(back - hh) < 1e-8, c.name << " h=" << format_point(hh));
      CHECK(st.residual <= 10 * cd.flow.tol);
      ++n;
    }
    CHECK(n == 100);
  }
  auto g = builtin_system("grushin");
  CHECK_THROWS_AS(make_chart(*g, pt({0, 0}), BasisFamily{{MultiIndex{1}, MultiIndex{2}}}), RankError);
}

TEST_CASE("control bounds") {
  ControlPiece lin{0, 1, {{MultiIndex{1}, 3.0}, {MultiIndex{2}, 4.0}}};
  CHECK(piece_bound(lin, ControlNorm::Euclidean) == doctest::Approx(5.0));
  CHECK(piece_bound(lin, ControlNorm::Box) == doctest::Approx(4.0));
  ControlPiece mixed{0, 1, {{MultiIndex{1}, 3.0}, {MultiIndex{1, 2}, 4.0}}};
  CHECK(piece_bound(mixed, ControlNorm::Box) == doctest::Approx(3.0));
  // 9/d^2 + 16/d^4 = 1  =>  d^2 = (9 + sqrt(145)) / 2
  CHECK(piece_bound(mixed, ControlNorm::Euclidean) == doctest::Approx(std::sqrt((9 + std::sqrt(145.0)) / 2)).epsilon(1e-12));
  CHECK(piece_bound(ControlPiece{0, 1, {}}, ControlNorm::Euclidean) == 0.0);
}

TEST_CASE("admissible_solve") {
  auto g = wide_grushin();
  const double delta = 0.3;
  Point o = pt({0, 0});
  ControlSchedule one{{{0, 1, {{MultiIndex{1}, delta}}}}};
  auto t1 = admissible_solve(*g, one, o);
  CHECK(max_abs(t1.end - pt({delta, 0})) < 1e-12);
  CHECK(t1.bound == doctest::Approx(delta));

  auto t0 = admissible_solve(*g, ControlSchedule{}, pt({0.5, 0.5}));
  CHECK(t0.end == pt({0.5, 0.5}));
  CHECK(t0.bound == 0.0);

  // Half time at doubled speed: exp(delta X1) then exp(delta X2).
  ControlSchedule two{{{0, 0.5, {{MultiIndex{1}, 2 * delta}}}, {0.5, 1, {{MultiIndex{2}, 2 * delta}}}}};
  auto t2 = admissible_solve(*g, two, o);
  CHECK(max_abs(t2.end - pt({delta, delta * delta})) < 1e-12);
  CHECK(t2.samples.back().piece == 1);

  auto h = builtin_system("heisenberg");
  ControlSchedule br{{{0, 1, {{MultiIndex{1, 2}, 0.04}}}}};
  auto t3 = admissible_solve(*h, br, pt({0, 0, 0}));
  CHECK(max_abs(t3.end - pt({0, 0, 0.04})) < 1e-12);
  CHECK(t3.bound == doctest::Approx(0.2));
  ControlSchedule rev{{{0, 1, {{MultiIndex{2, 1}, 0.04}}}}};
  CHECK(max_abs(admissible_solve(*h, rev, pt({0, 0, 0})).end - pt({0, 0, -0.04})) < 1e-12);

  ControlSchedule gap{{{0, 0.4, {{MultiIndex{1}, 1.0}}}, {0.5, 1, {}}}};
  CHECK_THROWS_AS(admissible_solve(*g, gap, o), Error);

  std::ostringstream csv;
  write_trajectory_csv(csv, t2);
  std::string text = csv.str();
  CHECK(text.rfind("s,x1,x2,piece\n", 0) == 0);
  CHECK(text.find(",1\n") != std::string::npos);
}
