#include "doctest.h"
#include "hvf/flows.hpp"
#include "hvf/inequality.hpp"
#include "hvf/registry.hpp"
#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <random>

using namespace hvf;
using hvf::testing::pt;
using hvf::testing::random_point;

namespace {

const VectorFieldSystem& sys(const char* name) { return *builtin_system(name); }
const TestFunctionDef& fn(const char* system, const char* name) { return sys(system).function(name); }

TestFunctionDef constant(double v) {
  TestFunctionDef f;
  f.name = "c";
  f.expr = Expression::constant(v);
  f.smooth = Smoothness{100, false};
  return f;
}

double spread(const std::vector<double>& v) {
  auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  return *hi / *lo;
}

}  // namespace

TEST_CASE("x_gradient closed forms") {
  const auto& g = sys("grushin");
  std::mt19937_64 rng(3);
  for (int k = 0; k < 20; ++k) {
    Point x = random_point(rng, g.domain());
    Point a = x_gradient(g, fn("grushin", "u1"), x);
    CHECK(a[0] == doctest::Approx(1.0));
    CHECK(a[1] == doctest::Approx(0.0));
    Point b = x_gradient(g, fn("grushin", "u2"), x);
    CHECK(b[0] == doctest::Approx(0.0));
    CHECK(b[1] == doctest::Approx(x[0]).epsilon(1e-14));
    CHECK(x_gradient(g, constant(2.5), x).norm() == 0.0);
  }
  CHECK_THROWS_AS(x_gradient(g, fn("grushin", "u1"), pt({3, 0})), DomainError);
  TestFunctionDef rough = constant(1.0);
  rough.smooth = Smoothness{0, false};
  CHECK_THROWS_AS(GradientEvaluator(g, rough), SmoothnessError);
}

TEST_CASE("x_gradient matches the derivative along each flow") {
  std::mt19937_64 rng(5);
  for (const char* name : {"grushin", "heisenberg", "martinet"}) {
    const auto& s = sys(name);
    for (const auto& u : s.functions()) {
      if (u.support) continue;
      GradientEvaluator ge(s, u);
      for (int k = 0; k < 10; ++k) {
        Point x = 0.5 * random_point(rng, s.domain());
        Point xg = ge.x_gradient(x);
        for (int i = 1; i <= s.nfields(); ++i) {
          const double h = 1e-4;
          double fd = (ge.value(exp_map(s, i, h, x)) - ge.value(exp_map(s, i, -h, x))) / (2 * h);
          CHECK(std::fabs(fd - xg[i - 1]) < 1e-5);
        }
      }
    }
  }
}

TEST_CASE("poincare ratio") {
  IntegralOptions opt;
  opt.samples = 40000;

  SUBCASE("constant function") {
    auto r = poincare_ratio(sys("grushin"), constant(4.0), pt({0, 0}), 0.125, 2.0, opt);
    CHECK(r.lhs == 0.0);
    CHECK(r.implied_constant == 0.0);
    CHECK(r.rhs == 0.0);
  }

  SUBCASE("euclidean linear function scales out") {
    std::vector<double> c;
    for (int k = 3; k <= 6; ++k) {
      auto r = poincare_ratio(sys("euclid2"), fn("euclid2", "u1"), pt({0.3, -0.2}), std::ldexp(1.0, -k), 2.0, opt);
      CHECK(r.lhs > 0);
      CHECK(r.lhs <= r.implied_constant * r.rhs * (1 + 1e-12));
      c.push_back(r.implied_constant);
    }
    CHECK(spread(c) < 1.1);
  }

  SUBCASE("grushin sweep through the singular line") {
    std::vector<double> c;
    for (int k = 3; k <= 7; ++k) {
      auto r = poincare_ratio(sys("grushin"), fn("grushin", "u2"), pt({0, 0}), std::ldexp(1.0, -k), 2.0, opt);
      c.push_back(r.implied_constant);
    }
    CHECK(spread(c) < 1.3);
  }

  SUBCASE("drift systems are rejected") {
    auto k = parse_system(R"(name = kolmogorov
dim = 2
nfields = 1
step = 3
domain = [-2,2]x[-2,2]
drift smooth Cinf: x2 ; 0
field 1 smooth Cinf: 0 ; 1
)");
    CHECK_THROWS_AS(poincare_ratio(*k, constant(1.0), pt({0, 0}), 0.1, 2.0, opt), HypothesisError);
  }
}

TEST_CASE("p-poincare ratio") {
  IntegralOptions opt;
  opt.samples = 40000;

  SUBCASE("p = 1 is the same-ball mean oscillation") {
    auto a = p_poincare_ratio(sys("grushin"), fn("grushin", "u2"), pt({0.5, 0}), 0.125, 1.0, opt);
    auto b = poincare_ratio(sys("grushin"), fn("grushin", "u2"), pt({0.5, 0}), 0.125, 1.0, opt);
    CHECK(a.lhs == doctest::Approx(b.lhs).epsilon(1e-12));
    CHECK(a.rhs == doctest::Approx(b.rhs).epsilon(1e-12));
  }

  SUBCASE("constant function") {
    auto r = p_poincare_ratio(sys("heisenberg"), constant(-1.0), pt({0, 0, 0}), 0.125, 2.0, opt);
    CHECK(r.implied_constant == 0.0);
  }

  SUBCASE("heisenberg vertical coordinate, p = 2") {
    IntegralOptions h = opt;
    h.res.steps = 10;
    std::vector<double> c;
    for (int k = 3; k <= 5; ++k) {
      auto r = p_poincare_ratio(sys("heisenberg"), fn("heisenberg", "u3"), pt({0, 0, 0}), std::ldexp(1.0, -k), 2.0, h);
      c.push_back(r.implied_constant);
    }
    CHECK(spread(c) < 1.3);
  }
}

TEST_CASE("doubled sample budget") {
  IntegralOptions opt;
  opt.samples = 100000;
  auto a = poincare_ratio(sys("grushin_c11"), fn("grushin_c11", "u2"), pt({0, 0}), 0.0625, 2.0, opt);
  opt.samples *= 2;
  auto b = poincare_ratio(sys("grushin_c11"), fn("grushin_c11", "u2"), pt({0, 0}), 0.0625, 2.0, opt);
  CHECK(std::fabs(b.implied_constant / a.implied_constant - 1) < 0.05);
}

TEST_CASE("sampling does not depend on the worker count") {
  IntegralOptions opt;
  opt.samples = 50000;
  auto a = poincare_ratio(sys("grushin"), fn("grushin", "u2"), pt({0, 0}), 0.125, 2.0, opt);
  opt.workers = 3;
  auto b = poincare_ratio(sys("grushin"), fn("grushin", "u2"), pt({0, 0}), 0.125, 2.0, opt);
  CHECK(a.lhs == b.lhs);
  CHECK(a.rhs == b.rhs);
  CHECK(a.inside == b.inside);
}

TEST_CASE("sobolev exponent") {
  SUBCASE("planar bump") {
    auto r = sobolev_exponent(sys("euclid2"), fn("euclid2", "bump"), pt({0, 0}), 0.0625);
    CHECK(r.k >= 1.9);
    CHECK(r.k <= 2.1);
    CHECK(r.rows.size() == 4);
  }
  SUBCASE("zero function") {
    TestFunctionDef z = constant(0.0);
    z.support = Point::Constant(2, 0.05);
    auto r = sobolev_exponent(sys("euclid2"), z, pt({0, 0}), 0.0625);
    CHECK(r.k == doctest::Approx(3.0));
    for (const auto& row : r.rows)
      for (double v : row.ratio) CHECK(v == 0.0);
  }
  SUBCASE("support must be declared and vanish on the cube") {
    CHECK_THROWS_AS(sobolev_exponent(sys("euclid2"), fn("euclid2", "u1"), pt({0, 0}), 0.1), HypothesisError);
    TestFunctionDef c = constant(1.0);
    c.support = Point::Constant(2, 0.05);
    CHECK_THROWS_AS(check_support(sys("euclid2"), c), HypothesisError);
  }
  SUBCASE("support outside the ball") {
    CHECK_THROWS_AS(sobolev_exponent(sys("euclid2"), fn("euclid2", "bump"), pt({0, 0}), 0.03), HypothesisError);
  }
  SUBCASE("heisenberg bump") {
    SobolevOptions opt;
    opt.res.steps = 12;
    auto r = sobolev_exponent(sys("heisenberg"), fn("heisenberg", "bump"), pt({0, 0, 0}), 0.0625, 1.0, opt);
    CHECK(r.k >= 4.0 / 3.0 - 0.1);
    CHECK(r.k <= 4.0 / 3.0 + 0.1);
    // The same bump declared on a cube is thinner than one grid cell in x3.
    TestFunctionDef cube = fn("heisenberg", "bump");
    cube.support = Point::Constant(3, 0.03125);
    CHECK_THROWS_AS(sobolev_exponent(sys("heisenberg"), cube, pt({0, 0, 0}), 0.0625, 1.0, opt), HypothesisError);
  }
}

TEST_CASE("lagrange bound") {
  SUBCASE("grushin square along the first field") {
    for (double s : {0.1, 0.3, 0.7}) {
      auto r = lagrange_check(sys("grushin"), fn("grushin", "sq"), pt({0, 0}), s, pt({s, 0}));
      CHECK(r.rho_hat == doctest::Approx(s).epsilon(1e-9));
      CHECK(r.lhs == doctest::Approx(s * s).epsilon(1e-12));
      CHECK(r.rhs == doctest::Approx(std::sqrt(2.0) * s * s).epsilon(1e-9));
      CHECK(r.holds);
    }
  }
  SUBCASE("trivial cases") {
    auto a = lagrange_check(sys("heisenberg"), constant(2.0), pt({0, 0, 0}), 2.0, pt({0.1, 0.2, 0.05}));
    CHECK(a.lhs == 0.0);
    CHECK(a.holds);
    auto b = lagrange_check(sys("grushin"), fn("grushin", "u2"), pt({0.3, 0.1}), 0.5, pt({0.3, 0.1}));
    CHECK(b.lhs == 0.0);
    CHECK(b.rhs == 0.0);
    CHECK(b.holds);
  }
  SUBCASE("random pairs") {
    std::mt19937_64 rng(11);
    for (const char* name : {"grushin", "heisenberg", "martinet", "grushin_c11"}) {
      const auto& s = sys(name);
      for (int k = 0; k < 5; ++k) {
        Point x0 = 0.5 * random_point(rng, s.domain());
        Point x = x0 + 0.2 * random_point(rng, s.domain());
        AdmissiblePath path = connect(s, x0, x);
        for (const auto& u : s.functions()) {
          if (u.support) continue;
          auto r = lagrange_check(s, u, x0, path.bound, x);
          CHECK_MESSAGE(r.holds, name << " " << u.name << " lhs " << r.lhs << " rhs " << r.rhs);
        }
      }
    }
  }
  SUBCASE("radius below the control bound") {
    CHECK_THROWS_AS(lagrange_check(sys("grushin"), fn("grushin", "sq"), pt({0, 0}), 0.1, pt({0.2, 0})), HypothesisError);
  }
}

TEST_CASE("rough poincare decomposition") {
  IntegralOptions opt;
  opt.samples = 40000;

  SUBCASE("polynomial fields leave no remainder") {
    auto r = rough_poincare_decomposition(sys("grushin"), fn("grushin", "u2"), pt({0.2, 0}), 0.0625, 2.0, opt);
    CHECK(r.remainder_term == 0.0);
    CHECK(r.coefficient == 0.0);
    CHECK(r.x_term > 0.0);
  }
  SUBCASE("constant function") {
    auto r = rough_poincare_decomposition(sys("grushin_c11"), constant(1.0), pt({0, 0}), 0.0625, 2.0, opt);
    CHECK(r.lhs == doctest::Approx(0.0));
    CHECK(r.x_term == 0.0);
    CHECK(r.remainder_term == 0.0);
  }
  SUBCASE("perturbed grushin remainder coefficient decays") {
    std::vector<double> c;
    for (int k = 3; k <= 6; ++k) {
      auto r = rough_poincare_decomposition(sys("grushin_c11"), fn("grushin_c11", "u2"), pt({0, 0}), std::ldexp(1.0, -k),
                                            2.0, opt);
      c.push_back(r.coefficient);
    }
    for (size_t i = 1; i < c.size(); ++i) CHECK(c[i] < c[i - 1]);
    CHECK(c.back() < 0.25 * c.front());
  }
}

TEST_CASE("one shared sample serves every integrand") {
  IntegralOptions opt;
  opt.samples = 30000;
  const auto& g = sys("grushin");
  BallIntegrator bi(g, pt({0.25, 0}), 0.125, 2.0, opt);
  for (const char* name : {"u1", "u2", "sq"}) {
    auto a = bi.poincare(fn("grushin", name));
    auto b = poincare_ratio(g, fn("grushin", name), pt({0.25, 0}), 0.125, 2.0, opt);
    CHECK(a.lhs == b.lhs);
    CHECK(a.rhs == b.rhs);
    auto c = bi.p_poincare(fn("grushin", name), 2.0);
    CHECK(c.lambda == 1.0);
    CHECK(c.inside == a.inside);
  }
}
