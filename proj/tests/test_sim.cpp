#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "lk/sim.hpp"

using namespace lk;

namespace {

const std::vector<std::string> kVars = {"y",  "vy", "psi", "r",
                                        "pa", "rs", "phi", "p"};

MlpModel hand_model() {
  auto m = make_mlp({6, 9}, 1);
  m.W[0].setZero();
  m.b[0].setZero();
  for (int i = 0; i < 9; ++i) {
    const double decay = std::pow(1.0 - i / 8.0, 2);
    m.W[0](i, 0) = decay;
    m.W[0](i, 1) = 20.0 * decay;
  }
  return m;
}

struct Setup {
  ChContext ctx;
  LqrBaseline lqr;
};

Setup make_setup() {
  Setup s;
  s.ctx.dyn = build_dynamics(TruckParams{});
  s.ctx.chain = output_chain(s.ctx.dyn, 1.0, 20.0);
  Mat8 Q = Mat8::Zero();
  Q(0, 0) = 10.0;
  Q(2, 2) = 10.0;
  for (int i : {1, 3, 4, 5, 6, 7}) Q(i, i) = 0.1;
  s.lqr = lqr_baseline(s.ctx.dyn, Q, 1.0);
  Vec8 yb = Vec8::Zero();
  yb(0) = 1.0;
  const double level = 2.0 * yb.dot(s.lqr.P * yb);
  s.ctx.bar.b = quadratic_form(kVars, -s.lqr.P / level, Vec::Zero(8), 1.0);
  s.ctx.bar.kappa = 1.0;
  s.ctx.models.s1 = hand_model();
  s.ctx.models.s2 = hand_model();
  default_feature_ranges(HorizonTag::S1, s.ctx.models.s1_lo, s.ctx.models.s1_hi);
  default_feature_ranges(HorizonTag::S2, s.ctx.models.s2_lo, s.ctx.models.s2_hi);
  return s;
}

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("scenario library and validation") {
  SUBCASE("built-ins validate") {
    for (const char* n : {"straight", "nominal", "offset"})
      CHECK_NOTHROW(make_scenario(n));
    CHECK_THROWS_AS(make_scenario("bogus"), ModelError);
  }
  SUBCASE("Table-I envelope enforced") {
    Scenario sc = make_scenario("straight");
    sc.road = {{10.0, 0.03}};  // tighter than the 1000 m radius
    CHECK_THROWS_AS(sc.validate(), ModelError);
    sc = make_scenario("straight");
    sc.wind_amp = 2500.0;
    CHECK_THROWS_AS(sc.validate(), ModelError);
    sc = make_scenario("straight");
    sc.control_period = 0.0105;
    CHECK_THROWS_AS(sc.validate(), ModelError);
  }
  SUBCASE("road and wind profiles") {
    Scenario sc = make_scenario("straight");
    sc.road = {{10.0, 0.01}, {5.0, -0.02}};
    CHECK(sc.rd_at(3.0) == 0.01);
    CHECK(sc.rd_at(12.0) == -0.02);
    CHECK(sc.rd_at(99.0) == -0.02);  // held past the profile
    sc.wind_amp = 1000.0;
    sc.wind_period = 4.0;
    sc.wind_phase = 0.0;
    CHECK(sc.wind_at(1.0) == 1000.0);
    CHECK(sc.wind_at(3.0) == -1000.0);
    CHECK(sc.wind_at(5.0) == 1000.0);
  }
  SUBCASE("config round trip") {
    auto cfg = Config::from_string(
        "name = curvy\nduration = 12\nroad_durations = 6 6\n"
        "road_rds = 0.01 -0.01\nwind_amp = 500\n");
    auto sc = scenario_from_config(cfg);
    CHECK(sc.name == "curvy");
    CHECK(sc.road.size() == 2);
    CHECK(sc.rd_at(8.0) == -0.01);
  }
  SUBCASE("unknown scenario key rejected") {
    auto cfg = Config::from_string("duration = 12\nwind_maplitude = 3\n");
    CHECK_THROWS(scenario_from_config(cfg));
  }
}

TEST_CASE("plant integration") {
  auto s = make_setup();
  SUBCASE("equilibrium hold to 1e-8 over 10 s") {
    const double rd = 0.015;
    const auto eq = equilibrium(s.ctx.dyn, s.ctx.chain, rd);
    Vec8 x = eq.x;
    for (int k = 0; k < 10000; ++k)
      x = plant_step(s.ctx.dyn, x, eq.u, rd, 0.0, 0.001);
    CHECK((x - eq.x).cwiseAbs().maxCoeff() <= 1e-8);
  }
  SUBCASE("fourth-order step halving") {
    Vec8 x0 = Vec8::Zero();
    x0(0) = 0.3;
    x0(2) = 0.01;
    auto integrate = [&](double dt) {
      Vec8 x = x0;
      const int n = static_cast<int>(std::round(1.0 / dt));
      for (int k = 0; k < n; ++k)
        x = plant_step(s.ctx.dyn, x, 0.05, 0.01, 500.0, dt);
      return x;
    };
    const Vec8 ref = integrate(1e-5);
    const double e1 = (integrate(4e-3) - ref).norm();
    const double e2 = (integrate(2e-3) - ref).norm();
    CHECK(e1 / e2 >= 11.0);
    CHECK(e1 / e2 <= 21.0);
  }
}

TEST_CASE("closed-loop runs") {
  auto s = make_setup();

  SUBCASE("straight road from rest stays identically at rest") {
    Scenario sc = make_scenario("straight");
    sc.duration = 5.0;
    auto tr = run_scenario(sc, ControllerKind::Learned, s.ctx, s.lqr);
    CHECK(tr.rows.size() == 501);
    CHECK_FALSE(tr.aborted);
    double worst_x = 0.0, worst_u = 0.0;
    for (const auto& r : tr.rows) {
      worst_x = std::max(worst_x, r.x.cwiseAbs().maxCoeff());
      worst_u = std::max(worst_u, std::abs(r.u));
    }
    CHECK(worst_x <= 1e-12);
    CHECK(worst_u <= 1e-12);
    CHECK(compute_metrics(tr, s.ctx).interventions == 0);
  }
  SUBCASE("trace z column equals c x") {
    Scenario sc = make_scenario("offset");
    sc.duration = 6.0;
    auto tr = run_scenario(sc, ControllerKind::Learned, s.ctx, s.lqr);
    for (const auto& r : tr.rows)
      CHECK(std::abs(r.z - s.ctx.chain.c.dot(r.x)) <= 1e-12);
  }
  SUBCASE("deterministic byte-identical CSV") {
    Scenario sc = make_scenario("offset");
    sc.duration = 4.0;
    auto a = run_scenario(sc, ControllerKind::Learned, s.ctx, s.lqr);
    auto b = run_scenario(sc, ControllerKind::Learned, s.ctx, s.lqr);
    write_trace_csv(a, "test_sim_a.csv");
    write_trace_csv(b, "test_sim_b.csv");
    CHECK(slurp("test_sim_a.csv") == slurp("test_sim_b.csv"));
    std::remove("test_sim_a.csv");
    std::remove("test_sim_b.csv");
  }
  SUBCASE("control continuity between events") {
    s.ctx.sup.fy_max = 0.0;
    Scenario sc = make_scenario("offset");
    sc.duration = 8.0;
    auto tr = run_scenario(sc, ControllerKind::Learned, s.ctx, s.lqr);
    double worst = 0.0;
    for (std::size_t i = 1; i < tr.rows.size(); ++i) {
      if (tr.rows[i].event) continue;
      worst = std::max(worst, std::abs(tr.rows[i].u - tr.rows[i - 1].u));
    }
    CHECK(worst <= 0.02);  // measured Lipschitz bound times 10 ms, with slack
  }
  SUBCASE("convergence to the curved-road equilibrium") {
    s.ctx.sup.fy_max = 0.0;
    const double rd = 0.01;
    Scenario sc;
    sc.name = "curve";
    sc.duration = 10.0;
    sc.road = {{10.0, rd}};
    const auto eq = equilibrium(s.ctx.dyn, s.ctx.chain, rd);
    sc.x0 = eq.x;
    sc.x0(0) += 0.2;   // slow-state offset
    sc.x0(6) += 0.05;  // fast-state (x2) mismatch vs the insertion map
    auto tr = run_scenario(sc, ControllerKind::Learned, s.ctx, s.lqr);
    REQUIRE_FALSE(tr.aborted);
    CHECK((tr.rows.back().x - eq.x).norm() <= 1e-3);
  }
  SUBCASE("supervised LQR stays safe on the offset scenario") {
    Scenario sc = make_scenario("offset");
    sc.duration = 30.0;
    auto tr = run_scenario(sc, ControllerKind::Lqr, s.ctx, s.lqr);
    REQUIRE_FALSE(tr.aborted);
    CHECK(compute_metrics(tr, s.ctx).min_b >= -1e-3);
  }
}

TEST_CASE("metrics") {
  auto s = make_setup();
  SUBCASE("zero trace gives all-zero metrics") {
    SimTrace tr;
    for (int k = 0; k < 10; ++k) {
      SimSample r;
      r.t = k * 0.01;
      tr.rows.push_back(r);
    }
    const auto m = compute_metrics(tr, s.ctx);
    CHECK(m.min_b == 0.0);
    CHECK(m.max_abs_y == 0.0);
    CHECK(m.max_abs_phi == 0.0);
    CHECK(m.interventions == 0);
    CHECK(m.du_energy == 0.0);
    CHECK(m.jerk_rms == 0.0);
    CHECK(m.max_abs_u == 0.0);
    CHECK(m.replans == 0);
  }
  SUBCASE("a single three-sample spike is one episode") {
    SimTrace tr;
    for (int k = 0; k < 50; ++k) {
      SimSample r;
      r.t = k * 0.01;
      if (k >= 20 && k < 23) r.du = 0.01;
      tr.rows.push_back(r);
    }
    const auto m = compute_metrics(tr, s.ctx);
    CHECK(m.interventions == 1);
    CHECK(m.du_energy == doctest::Approx(3 * 0.01 * 0.01 * 0.01));
  }
  SUBCASE("two separated spikes are two episodes") {
    SimTrace tr;
    for (int k = 0; k < 50; ++k) {
      SimSample r;
      r.t = k * 0.01;
      if (k == 10 || k == 30) r.du = 0.02;
      tr.rows.push_back(r);
    }
    CHECK(compute_metrics(tr, s.ctx).interventions == 2);
  }
  SUBCASE("barrier dip is reported") {
    SimTrace tr;
    for (int k = 0; k < 5; ++k) {
      SimSample r;
      r.t = k * 0.01;
      r.b = k == 3 ? -0.1 : 0.5;
      tr.rows.push_back(r);
    }
    CHECK(compute_metrics(tr, s.ctx).min_b == doctest::Approx(-0.1));
  }
  SUBCASE("identical controllers give identical metrics") {
    Scenario sc = make_scenario("offset");
    sc.duration = 4.0;
    auto a = compute_metrics(
        run_scenario(sc, ControllerKind::Lqr, s.ctx, s.lqr), s.ctx);
    auto b = compute_metrics(
        run_scenario(sc, ControllerKind::Lqr, s.ctx, s.lqr), s.ctx);
    CHECK(a.min_b == b.min_b);
    CHECK(a.interventions == b.interventions);
    CHECK(a.du_energy == b.du_energy);
    CHECK(a.jerk_rms == b.jerk_rms);
  }
}
