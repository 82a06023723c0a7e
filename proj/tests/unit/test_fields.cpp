#include "doctest.h"

#include "hvf/fields.hpp"
#include "hvf/registry.hpp"
#include "support.hpp"

#include <cmath>
#include <random>

using namespace hvf;
using namespace hvf::testing;

TEST_CASE("system file parsing") {
  auto sys = parse_system(R"(dim = 2
nfields = 2
step = 2
domain = [-1,1]x[-1,1]
# comment line
field 1 smooth C{1}: 1 ; 0
field 2 smooth C{1,1}: 0 ; x1 + 0.3*x1*abs(x1)
function f smooth C1 support 0.5: x1^2
)");
  CHECK(sys->dim() == 2);
  CHECK(sys->nfields() == 2);
  CHECK(sys->field(2).smooth.lipschitz);
  CHECK(sys->field(1).smooth.k == 1);
  CHECK(*sys->function("f").support == Point::Constant(2, 0.5));
  auto again = parse_system(format_system(*sys));
  CHECK(format_system(*again) == format_system(*sys));

  CHECK_THROWS_AS(parse_system("dim = 2\nnfields = 1\nstep = 2\ndomain = [-1,1]x[-1,1]\nfield 1 smooth C1: 1 ; x3\n"), ParseError);
  CHECK_THROWS_AS(parse_system("dim = 2\nnfields = 2\nstep = 2\ndomain = [-1,1]x[-1,1]\nfield 1 smooth C1: 1 ; 0\n"), ParseError);
  CHECK_THROWS_AS(parse_system("dim = 2\nstep = 2\n"), ParseError);
  try {
    parse_system("dim = 2\nnfields = 1\nstep = 2\ndomain = [-1,1]x[-1,1]\nfield 1 smooth C1: 1 ; x1 +\n");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 5);
  }
}

TEST_CASE("evaluate_field on grushin") {
  auto g = builtin_system("grushin");
  CHECK(g->evaluate_field(1, pt({1.5, 0.5})) == pt({1, 0}));
  CHECK(g->evaluate_field(2, pt({1.5, 0.5})) == pt({0, 1.5}));
  CHECK(g->evaluate_field(2, pt({0, 0})) == pt({0, 0}));
  CHECK_THROWS_AS(g->evaluate_field(2, pt({3, 5})), DomainError);
}

TEST_CASE("commutators match hand-derived closed forms") {
  std::mt19937_64 rng(1);
  auto g = builtin_system("grushin");
  auto h = builtin_system("heisenberg");
  auto m = builtin_system("martinet");
  auto g12 = commutator(g, MultiIndex{1, 2});
  auto h12 = commutator(h, MultiIndex{1, 2});
  auto m12 = commutator(m, MultiIndex{1, 2});
  auto m112 = commutator(m, MultiIndex{1, 1, 2});
  auto m212 = commutator(m, MultiIndex{2, 1, 2});
  for (int k = 0; k < 50; ++k) {
    Point x2 = random_point(rng, g->working());
    Point x3 = random_point(rng, h->working());
    CHECK((g12(x2) - pt({0, 1})).norm() <= 1e-10);
    CHECK((commutator(g, MultiIndex{1})(x2) - g->evaluate_field(1, x2)).norm() == 0.0);
    CHECK((h12(x3) - pt({0, 0, 1})).norm() <= 1e-10);
    CHECK((m12(x3) - pt({0, 0, 2 * x3[0]})).norm() <= 1e-10);
    CHECK((m112(x3) - pt({0, 0, 2})).norm() <= 1e-10);
    CHECK(m212(x3).norm() <= 1e-10);
  }
  CHECK_THROWS(commutator(g, MultiIndex{1, 1, 2}));
}

TEST_CASE("jet and compiled symbolic commutators agree") {
  std::mt19937_64 rng(2);
  for (const auto& name : builtin_names()) {
    auto sys = builtin_system(name);
    for (int trial = 0; trial < 20; ++trial) {
      Point x = random_point(rng, sys->working());
      if (std::fabs(x[0]) < 1e-3) continue;
      for (size_t k = 0; k < sys->commutators().size(); ++k) {
        Point sym;
        sys->commutator_fast(static_cast<int>(k), x, sym);
        Point jet = commutator_value(*sys, sys->commutators()[k], x);
        CHECK((sym - jet).norm() <= 1e-10 * (1 + jet.norm()));
      }
    }
  }
}

TEST_CASE("antisymmetry and Jacobi identity") {
  std::mt19937_64 rng(3);
  auto sys = parse_system(R"(dim = 3
nfields = 3
step = 3
domain = [-1,1]x[-1,1]x[-1,1]
field 1 smooth Cinf: 1 + x2^2 ; x3 ; x1*x2
field 2 smooth Cinf: x3^2 ; 1 ; x1
field 3 smooth Cinf: x2 ; x1*x3 ; 1 - x2
)");
  for (int k = 0; k < 50; ++k) {
    Point x = random_point(rng, sys->working());
    for (int i = 1; i <= 3; ++i) {
      for (int j = 1; j <= 3; ++j) {
        Point a = commutator_value(*sys, MultiIndex{i, j}, x);
        Point b = commutator_value(*sys, MultiIndex{j, i}, x);
        CHECK((a + b).norm() <= 1e-10);
      }
    }
    Point jac = commutator_value(*sys, MultiIndex{1, 2, 3}, x) + commutator_value(*sys, MultiIndex{2, 3, 1}, x) +
                commutator_value(*sys, MultiIndex{3, 1, 2}, x);
    CHECK(jac.norm() <= 1e-8);
  }
}

TEST_CASE("commutator jets") {
  auto m = builtin_system("martinet");
  auto ev = commutator(m, MultiIndex{1, 2});
  auto j = ev.jet(pt({0.5, 0.1, 0.2}), 1);
  // [X1, X2] = 2 x1 d/dx3
  CHECK(j[2].value() == doctest::Approx(1.0));
  CHECK(j[2].coeff({1, 0, 0}) == doctest::Approx(2.0));
  auto c = builtin_system("grushin_c11");
  CHECK_THROWS_AS(commutator(c, MultiIndex{1, 2}).jet(pt({0.5, 0}), 2), SmoothnessError);
}

TEST_CASE("hormander rank and best family") {
  auto g = builtin_system("grushin");
  auto r0 = hormander_rank(*g, pt({0, 0}));
  CHECK(r0.rank == 2);
  CHECK(r0.best == BasisFamily{{MultiIndex{1}, MultiIndex{1, 2}}});
  CHECK(r0.det == doctest::Approx(1.0));
  auto r1 = hormander_rank(*g, pt({1, 0}));
  CHECK(r1.rank == 2);
  CHECK(r1.best == BasisFamily{{MultiIndex{1}, MultiIndex{2}}});
  CHECK(r1.det == doctest::Approx(1.0));

  auto single = parse_system("dim = 2\nnfields = 1\nstep = 2\ndomain = [-1,1]x[-1,1]\nfield 1 smooth Cinf: 1 ; 0\n");
  CHECK(hormander_rank(*single, pt({0.2, 0.3})).rank == 1);
  CHECK_THROWS_AS(optimal_basis(*single, pt({0.2, 0.3}), 0.1), RankError);

  for (const auto& name : builtin_names()) {
    auto sys = builtin_system(name);
    for (const auto& x : grid_points(sys->working(), 5)) CHECK(hormander_rank(*sys, x).rank == sys->dim());
  }
}

TEST_CASE("optimal basis selection") {
  auto g = builtin_system("grushin");
  for (double rho : {1.0, 0.1, 0.01}) CHECK(optimal_basis(*g, pt({0, 0}), rho) == BasisFamily{{MultiIndex{1}, MultiIndex{1, 2}}});
  CHECK(optimal_basis(*g, pt({1, 0}), 0.01) == BasisFamily{{MultiIndex{1}, MultiIndex{2}}});
  auto h = builtin_system("heisenberg");
  for (double rho : {1.0, 1e-3}) CHECK(optimal_basis(*h, pt({0, 0, 0}), rho) == BasisFamily{{MultiIndex{1}, MultiIndex{2}, MultiIndex{1, 2}}});

  // The returned family passes the threshold against exhaustive enumeration.
  std::mt19937_64 rng(4);
  for (const auto& name : builtin_names()) {
    auto sys = builtin_system(name);
    for (int k = 0; k < 20; ++k) {
      Point x = random_point(rng, sys->working());
      double rho = std::pow(2.0, -std::uniform_int_distribution<int>(0, 8)(rng));
      BasisFamily eta = optimal_basis(*sys, x, rho);
      double best = 0;
      for (const auto& fv : enumerate_families(*sys, x)) best = std::max(best, fv.det * std::pow(rho, fv.eta.weight()));
      CHECK(std::fabs(lambda(*sys, eta, x)) * std::pow(rho, eta.weight()) > 0.5 * best);
    }
  }
}

TEST_CASE("lambda is antisymmetric under swaps") {
  auto h = builtin_system("heisenberg");
  Point x = pt({0.3, -0.2, 0.1});
  BasisFamily a{{MultiIndex{1}, MultiIndex{2}, MultiIndex{1, 2}}};
  BasisFamily b{{MultiIndex{2}, MultiIndex{1}, MultiIndex{1, 2}}};
  CHECK(lambda(*h, a, x) == doctest::Approx(-lambda(*h, b, x)));
}

TEST_CASE("taylor systems") {
  auto c = builtin_system("grushin_c11");
  auto ts = taylor_system(*c, pt({0, 0}));
  Point q = pt({0.37, -0.2});
  CHECK(ts.system->evaluate_field(2, q)[1] == doctest::Approx(0.37));
  CHECK(ts.validity_radius > 0.0);

  auto g = builtin_system("grushin");
  auto tg = taylor_system(*g, pt({0.4, 0.1}));
  for (int i = 1; i <= 2; ++i) CHECK((tg.system->evaluate_field(i, q) - g->evaluate_field(i, q)).norm() <= 1e-14);
  for (const auto& I : g->commutators()) CHECK(taylor_remainder(*g, tg, I, pt({0.5, 0.2})) == doctest::Approx(0.0));
  CHECK(taylor_remainder(*g, tg, MultiIndex{1, 2}, pt({0.4, 0.1})) == 0.0);

  // Brackets of the Taylor system agree with the original at the base point.
  std::mt19937_64 rng(5);
  for (const auto& name : builtin_names()) {
    auto sys = builtin_system(name);
    for (int k = 0; k < 5; ++k) {
      Point x0 = random_point(rng, sys->working());
      auto t = taylor_system(*sys, x0);
      for (const auto& I : sys->commutators()) {
        CHECK((commutator_value(*sys, I, x0) - commutator_value(*t.system, I, x0)).norm() <= 1e-10);
      }
    }
  }
  CHECK_THROWS_AS(taylor_remainder(*c, ts, MultiIndex{2}, pt({0, 0}) + Point::Constant(2, ts.validity_radius)), DomainError);
}

TEST_CASE("remainder decay for Lipschitz-top systems") {
  for (const char* name : {"grushin_c11", "heisenberg_c11"}) {
    auto sys = builtin_system(name);
    Point x0 = Point::Zero(sys->dim());
    auto ts = taylor_system(*sys, x0);
    for (const auto& I : sys->commutators()) {
      std::vector<double> ss, sup;
      for (int k = 3; k <= 10; ++k) {
        double s = std::pow(2.0, -k);
        double m = 0;
        for (int dir = 0; dir < sys->dim(); ++dir) {
          for (int sg : {-1, 1}) {
            Point x = x0;
            x[dir] += sg * s;
            m = std::max(m, (commutator_value(*sys, I, x) - commutator_value(*ts.system, I, x)).norm());
          }
        }
        ss.push_back(s);
        sup.push_back(m);
      }
      bool exact = true;
      for (double v : sup) exact = exact && v <= 1e-14;
      if (!exact) CHECK(slope(ss, sup) >= sys->step() - I.weight() + 0.9);
    }
  }
}
