#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Eigenvalues>

#include "lk/tracking.hpp"
#include "lk/truck_model.hpp"

using namespace lk;

namespace {
LinearDynamics default_dyn() { return build_dynamics(TruckParams{}); }
}  // namespace

TEST_CASE("y column of A is identically zero") {
  auto dyn = default_dyn();
  CHECK(dyn.A.col(0).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("ydot row is v_y + vx*psi") {
  auto dyn = default_dyn();
  RowVec8 expect = RowVec8::Zero();
  expect(1) = 1.0;
  expect(2) = 20.0;
  CHECK((dyn.A.row(0) - expect).cwiseAbs().maxCoeff() == 0.0);
  CHECK(dyn.A(2, 3) == 1.0);  // psidot row equals r
}

TEST_CASE("velocity subsystem is Hurwitz for the default set") {
  auto dyn = default_dyn();
  // states excluding y (0) and psi (2)
  const int idx[6] = {1, 3, 4, 5, 6, 7};
  Eigen::Matrix<double, 6, 6> Av;
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) Av(i, j) = dyn.A(idx[i], idx[j]);
  Eigen::EigenSolver<Eigen::Matrix<double, 6, 6>> es(Av);
  CHECK(es.eigenvalues().real().maxCoeff() < 0.0);
}

TEST_CASE("non-physical parameters rejected") {
  TruckParams p;
  p.tractor_mass = -1.0;
  CHECK_THROWS_AS(build_dynamics(p), ModelError);
  TruckParams q;
  q.vx = 0.0;
  CHECK_THROWS_AS(build_dynamics(q), ModelError);
}

TEST_CASE("output chain relative degree") {
  auto dyn = default_dyn();
  auto ch = output_chain(dyn, 1.0, 20.0);
  CHECK(std::abs(ch.c * dyn.B) < 1e-12);
  CHECK(std::abs(ch.lglfh) > 1.0);

  SUBCASE("T0 = 0 makes z pure lateral deviation") {
    auto ch0 = output_chain(dyn, 0.0, 20.0);
    Vec8 x = Vec8::Zero();
    x(0) = 0.37;
    CHECK(ch0.c * x == doctest::Approx(0.37));
  }

  SUBCASE("z and zdot on lane center") {
    Vec8 x = Vec8::Zero();
    x(1) = 0.2;  // v_y
    const double rd = 0.015;
    CHECK(ch.c * x == doctest::Approx(0.0));
    const double zd = ch.cA * x + ch.dz_rd * rd;
    CHECK(zd == doctest::Approx(0.2 + ch.dz_rd * rd));
  }
}

TEST_CASE("equilibrium map") {
  auto dyn = default_dyn();
  auto ch = output_chain(dyn, 1.0, 20.0);

  SUBCASE("rd = 0 gives the origin") {
    auto eq = equilibrium(dyn, ch, 0.0);
    CHECK(eq.x.cwiseAbs().maxCoeff() < 1e-14);
    CHECK(std::abs(eq.u) < 1e-14);
  }

  SUBCASE("linear in rd") {
    auto e1 = equilibrium(dyn, ch, 0.01);
    auto e2 = equilibrium(dyn, ch, 0.02);
    CHECK((e2.x - 2.0 * e1.x).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(e2.u == doctest::Approx(2.0 * e1.u).epsilon(1e-10));
  }

  SUBCASE("residual of the defining system") {
    const double rd = 0.02;
    auto eq = equilibrium(dyn, ch, rd);
    Vec8 res = dyn.A * eq.x + dyn.B * eq.u + dyn.E1 * rd;
    CHECK(res.cwiseAbs().maxCoeff() < 1e-10);
    CHECK(std::abs(ch.c * eq.x) < 1e-10);
  }
}

TEST_CASE("zero dynamics") {
  auto dyn = default_dyn();
  auto ch = output_chain(dyn, 1.0, 20.0);
  auto zd = zero_dynamics(dyn, ch);

  CHECK(std::isfinite(zd.condition_number));
  CHECK(zd.stable);
  CHECK(zd.zero_dyn_eigs.real().maxCoeff() < 0.0);

  // B_bar sparsity: only position 2 (the zddot channel) is nonzero.
  for (int i = 0; i < 8; ++i) {
    if (i == 1)
      CHECK(zd.B_bar(i) == doctest::Approx(ch.lglfh).epsilon(1e-10));
    else
      CHECK(std::abs(zd.B_bar(i)) < 1e-12 * std::abs(ch.lglfh));
  }
}

TEST_CASE("open loop equilibrium hold over 10 s") {
  auto dyn = default_dyn();
  auto ch = output_chain(dyn, 1.0, 20.0);
  const double rd = 0.015;
  auto eq = equilibrium(dyn, ch, rd);

  Vec8 x = eq.x;
  const double dt = 1e-3;
  auto f = [&](const Vec8& s) -> Vec8 {
    return dyn.A * s + dyn.B * eq.u + dyn.E1 * rd;
  };
  for (int i = 0; i < 10000; ++i) {
    Vec8 k1 = f(x), k2 = f(x + 0.5 * dt * k1), k3 = f(x + 0.5 * dt * k2),
         k4 = f(x + dt * k3);
    x += dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
  }
  CHECK((x - eq.x).norm() < 1e-8);
}
