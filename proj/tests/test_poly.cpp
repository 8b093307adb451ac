#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "lk/poly.hpp"
#include "lk/truck_model.hpp"

using namespace lk;

namespace {
const std::vector<std::string> kXY = {"x", "y"};
}

TEST_CASE("(x+1)(x-1) = x^2 - 1") {
  auto x = MultiPoly::variable(kXY, "x");
  auto one = MultiPoly::constant(kXY, 1.0);
  auto p = (x + one) * (x - one);
  CHECK(p.coeff({2, 0}) == doctest::Approx(1.0));
  CHECK(p.coeff({0, 0}) == doctest::Approx(-1.0));
  CHECK(p.terms().size() == 2);
}

TEST_CASE("d/dx of x^2 y = 2 x y") {
  auto x = MultiPoly::variable(kXY, "x");
  auto y = MultiPoly::variable(kXY, "y");
  auto p = (x * x * y).differentiate("x");
  CHECK(p.coeff({1, 1}) == doctest::Approx(2.0));
  CHECK(p.terms().size() == 1);
}

TEST_CASE("substitute x -> 0 in x^2 + y leaves y") {
  auto x = MultiPoly::variable(kXY, "x");
  auto y = MultiPoly::variable(kXY, "y");
  auto p = (x * x + y).substitute("x", 0.0);
  CHECK(p.coeff({0, 1}) == doctest::Approx(1.0));
  CHECK(p.terms().size() == 1);
}

TEST_CASE("polynomial substitution composes") {
  auto x = MultiPoly::variable(kXY, "x");
  auto y = MultiPoly::variable(kXY, "y");
  // x^2 with x -> y + 1 gives y^2 + 2y + 1
  auto p = (x * x).substitute("x", y + MultiPoly::constant(kXY, 1.0));
  CHECK(p.coeff({0, 2}) == doctest::Approx(1.0));
  CHECK(p.coeff({0, 1}) == doctest::Approx(2.0));
  CHECK(p.coeff({0, 0}) == doctest::Approx(1.0));
}

TEST_CASE("unknown variable rejected") {
  auto x = MultiPoly::variable(kXY, "x");
  CHECK_THROWS(x.differentiate("z"));
  CHECK_THROWS((void)MultiPoly::variable(kXY, "q"));
}

TEST_CASE("mixed variable lists merge by name") {
  auto x = MultiPoly::variable({"x"}, "x");
  auto y = MultiPoly::variable({"y"}, "y");
  auto p = x * y + x;
  CHECK(p.vars().size() == 2);
  Vec pt(2);
  pt << 3.0, 5.0;
  CHECK(p.eval(pt) == doctest::Approx(18.0));
}

TEST_CASE("graded lex order and monomial enumeration") {
  GradedLex lt;
  CHECK(lt({0, 0}, {1, 0}));        // degree first
  CHECK(lt({0, 2}, {1, 1}));        // same degree: lex on exponent vectors
  CHECK(lt({1, 1}, {0, 2}) == false);
  CHECK(lt({0, 2}, {2, 0}));
  CHECK(lt({1, 1}, {1, 1}) == false);  // irreflexive
  auto ms = monomials_up_to(3, 2);
  CHECK(ms.size() == 10);  // C(3+2,2)
  CHECK(ms.front() == std::vector<int>({0, 0, 0}));
  for (std::size_t i = 1; i < ms.size(); ++i) CHECK(lt(ms[i - 1], ms[i]));
}

TEST_CASE("l1 norm and degree bookkeeping") {
  auto x = MultiPoly::variable(kXY, "x");
  auto y = MultiPoly::variable(kXY, "y");
  auto p = x * x * y * 3.0 - y * 2.0;
  CHECK(p.degree() == 3);
  CHECK(p.l1_norm() == doctest::Approx(5.0));
}

TEST_CASE("lie derivative scalar example") {
  auto x = MultiPoly::variable({"x"}, "x");
  auto b = x * x;
  auto L = lie_derivative(b, {-x}, {"x"});
  CHECK(L.coeff({2}) == doctest::Approx(-2.0));
  CHECK(L.terms().size() == 1);
}

TEST_CASE("quadratic b with linear field stays degree <= 2") {
  std::vector<std::string> v = {"x", "y"};
  Mat M(2, 2);
  M << 2.0, 0.5, 0.5, 1.0;
  auto b = quadratic_form(v, M, Vec::Zero(2), -1.0);
  auto x = MultiPoly::variable(v, "x");
  auto y = MultiPoly::variable(v, "y");
  auto L = lie_derivative(b, {y, -x - y}, {"x", "y"});
  CHECK(L.degree() <= 2);
}

TEST_CASE("truck lie derivative against numeric gradient oracle") {
  auto dyn = build_dynamics(TruckParams{});
  std::vector<std::string> vars;
  for (int i = 1; i <= 8; ++i) vars.push_back("x" + std::to_string(i));
  vars.push_back("u");
  vars.push_back("rd");
  vars.push_back("fy");

  Mat8 P = Mat8::Identity();
  P(0, 0) = 4.0;
  P(2, 2) = 9.0;
  Mat Pfull = Mat::Zero(11, 11);
  Pfull.topLeftCorner<8, 8>() = P;
  auto b = quadratic_form(vars, -Pfull, Vec::Zero(11), 1.0);  // 1 - x'Px

  std::vector<MultiPoly> field;
  for (int i = 0; i < 8; ++i) {
    MultiPoly fi(vars);
    for (int j = 0; j < 8; ++j) {
      if (dyn.A(i, j) == 0.0) continue;
      std::vector<int> e(11, 0);
      e[j] = 1;
      fi.add_term(e, dyn.A(i, j));
    }
    auto put = [&](int slot, double val) {
      if (val == 0.0) return;
      std::vector<int> e(11, 0);
      e[slot] = 1;
      fi.add_term(e, val);
    };
    put(8, dyn.B(i));
    put(9, dyn.E1(i));
    put(10, dyn.E2(i));
    field.push_back(fi);
  }
  std::vector<std::string> xs(vars.begin(), vars.begin() + 8);
  auto L = lie_derivative(b, field, xs);

  SUBCASE("u coefficient is (db/dx).B, linear in x") {
    // db/dx = -2 P x, so the u-coefficient polynomial is -2 (P x).B
    Vec8 lin = -2.0 * (P * dyn.B);
    for (int j = 0; j < 8; ++j) {
      std::vector<int> e(11, 0);
      e[j] = 1;
      e[8] = 1;
      CHECK(L.coeff(e) == doctest::Approx(lin(j)).epsilon(1e-12));
    }
    // no higher powers of u
    std::vector<int> uu(11, 0);
    uu[8] = 2;
    CHECK(L.coeff(uu) == 0.0);
  }

  SUBCASE("100 random points match gradient dot field") {
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> dist(-0.5, 0.5);
    for (int trial = 0; trial < 100; ++trial) {
      Vec pt(11);
      for (int i = 0; i < 11; ++i) pt(i) = dist(rng);
      Vec8 x = pt.head<8>();
      Vec8 xdot = dyn.A * x + dyn.B * pt(8) + dyn.E1 * pt(9) + dyn.E2 * pt(10);
      const double expected = (-2.0 * P * x).dot(xdot);
      const double got = L.eval(pt);
      CHECK(got == doctest::Approx(expected).epsilon(1e-8));
    }
  }
}

TEST_CASE("quadratic_form matches matrix arithmetic") {
  std::mt19937 rng(4);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Mat M(3, 3);
  Vec q(3), pt(3);
  for (int i = 0; i < 3; ++i) {
    q(i) = dist(rng);
    pt(i) = dist(rng);
    for (int j = 0; j < 3; ++j) M(i, j) = dist(rng);
  }
  M = (0.5 * (M + M.transpose())).eval();
  auto p = quadratic_form({"a", "b", "c"}, M, q, 0.7);
  const double expected = pt.dot(M * pt) + 2.0 * q.dot(pt) + 0.7;
  CHECK(p.eval(pt) == doctest::Approx(expected).epsilon(1e-12));
}
