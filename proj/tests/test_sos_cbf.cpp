#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "lk/sos_cbf.hpp"

using namespace lk;

namespace {

SosSystem one_d_system(double u_max = 1.0) {
  SosSystem sys;
  sys.state_vars = {"x"};
  sys.input_var = "u";
  MultiPoly f({"x", "u"});
  f.add_term({1, 0}, -1.0);
  f.add_term({0, 1}, 1.0);
  sys.field = {f};
  sys.u_max = u_max;
  sys.dist_bounds = Vec::Zero(0);
  auto x = MultiPoly::variable({"x"}, "x");
  sys.danger = {{x * x - MultiPoly::constant({"x"}, 1.0)}};
  sys.box_hi = Vec::Constant(1, 1.2);
  sys.box_lo = -sys.box_hi;
  return sys;
}

MultiPoly one_d_barrier(double scale) {
  // 1 - scale * x^2
  MultiPoly b({"x"});
  b.add_term({0}, 1.0);
  b.add_term({2}, -scale);
  return b;
}

SosSystem double_integrator() {
  SosSystem sys;
  sys.state_vars = {"p", "v"};
  sys.input_var = "u";
  MultiPoly f1({"p", "v", "u"}), f2({"p", "v", "u"});
  f1.add_term({0, 1, 0}, 1.0);
  f2.add_term({0, 0, 1}, 1.0);
  sys.field = {f1, f2};
  sys.u_max = 1.0;
  sys.dist_bounds = Vec::Zero(0);
  auto p = MultiPoly::variable(sys.state_vars, "p");
  sys.danger = {{p * p - MultiPoly::constant(sys.state_vars, 1.0)}};
  sys.box_hi = Vec(2);
  sys.box_hi << 1.2, 2.0;
  sys.box_lo = -sys.box_hi;
  return sys;
}

}  // namespace

TEST_CASE("opt_u certifies the unit 1-D barrier") {
  auto sys = one_d_system();
  SosConfig cfg;
  auto r = opt_u(one_d_barrier(1.0), sys, cfg);
  REQUIRE(r.feasible);
  CHECK(r.e <= 1e-6);
  CHECK(r.cert_error <= 1e-6);
  // the certified controller respects the input bound on {b >= 0}
  for (double x = -1.0; x <= 1.0; x += 0.05) {
    Vec pt = Vec::Constant(1, x);
    CHECK(std::abs(r.u.eval(pt)) <= 1.0 + 1e-6);
  }
}

TEST_CASE("opt_u on an oversized barrier still solves") {
  auto sys = one_d_system();
  SosConfig cfg;
  auto r = opt_u(one_d_barrier(0.01), sys, cfg);
  REQUIRE(r.feasible);
  // the open-loop drift is stable, so even the huge sublevel set certifies
  CHECK(std::isfinite(r.e));
  CHECK(r.e <= 1e-6);
}

TEST_CASE("degenerate input set: huge bound trivially feasible") {
  auto sys = one_d_system(1e6);
  SosConfig cfg;
  auto r = opt_u(one_d_barrier(1.0), sys, cfg);
  REQUIRE(r.feasible);
  CHECK(r.e <= 1e-6);
}

TEST_CASE("opt_b with eps = 0 returns a vanishing perturbation") {
  auto sys = one_d_system();
  SosConfig cfg;
  cfg.eps = 0.0;
  auto b = one_d_barrier(1.5);
  auto ru = opt_u(b, sys, cfg);
  REQUIRE(ru.feasible);
  auto rb = opt_b(b, ru.u, sys, cfg);
  REQUIRE(rb.feasible);
  CHECK(rb.db.l1_norm() <= 1e-6);
}

TEST_CASE("opt_b respects the l1 cap and grows the level set") {
  auto sys = one_d_system();
  SosConfig cfg;
  cfg.eps = 0.2;
  MultiPoly b = one_d_barrier(4.0);  // level set [-0.5, 0.5]
  auto volume = [&](const MultiPoly& bb) {
    int cnt = 0;
    for (int i = 0; i <= 400; ++i) {
      const double x = -2.0 + 4.0 * i / 400.0;
      if (bb.eval(Vec::Constant(1, x)) >= 0.0) ++cnt;
    }
    return cnt;
  };
  int prev_vol = volume(b);
  for (int it = 0; it < 3; ++it) {
    auto ru = opt_u(b, sys, cfg);
    REQUIRE(ru.feasible);
    auto rb = opt_b(b, ru.u, sys, cfg);
    REQUIRE(rb.feasible);
    CHECK(rb.db.l1_norm() <= cfg.eps * b.l1_norm() + 1e-7);
    b = b + rb.db;
    const int vol = volume(b);
    CHECK(vol >= prev_vol);  // monotone volume proxy until stall
    prev_vol = vol;
  }
}

TEST_CASE("synthesize_cbf on the 1-D system") {
  auto sys = one_d_system();
  SosConfig cfg;
  cfg.outer_iters = 4;
  cfg.inner_iters = 2;
  Mat P = Mat::Constant(1, 1, 1.0);
  auto b0 = seed_barrier({"x"}, P, Vec::Constant(1, 1.0), 0.9);
  auto bar = synthesize_cbf(sys, cfg, b0);
  REQUIRE(bar.certified);
  // accepted e values never increase
  for (std::size_t i = 1; i < bar.e_log.size(); ++i)
    CHECK(bar.e_log[i] <= bar.e_log[i - 1] + 1e-9);
  // zero level set inside (-1, 1)
  for (int i = 0; i <= 400; ++i) {
    const double x = -2.0 + 4.0 * i / 400.0;
    if (bar.b.eval(Vec::Constant(1, x)) >= 0.0) CHECK(std::abs(x) < 1.0);
  }
  CHECK(bar.b.eval(Vec::Zero(1)) > 0.0);
}

TEST_CASE("synthesize_cbf on the double integrator") {
  auto sys = double_integrator();
  SosConfig cfg;
  cfg.outer_iters = 3;
  cfg.inner_iters = 2;
  Mat P(2, 2);
  const double s3 = std::sqrt(3.0);
  P << s3, 1.0, 1.0, s3;  // CARE solution for Q = I, R = 1
  Vec box(2);
  box << 1.0, 2.0;
  auto b0 = seed_barrier(sys.state_vars, P, box, 0.9);
  auto bar = synthesize_cbf(sys, cfg, b0);
  REQUIRE(bar.certified);
  auto rep = sampled_verify(bar, sys, 20000, 7, false);
  CHECK(rep.n_violations == 0);
  CHECK(rep.worst_cbf_margin >= -1e-6);
  CHECK(rep.worst_input_margin >= -1e-9);
  CHECK(rep.worst_danger_value <= 1e-9);
}

TEST_CASE("sampled_verify on the certified 1-D barrier") {
  auto sys = one_d_system();
  SosConfig cfg;
  auto b = one_d_barrier(1.0);
  auto ru = opt_u(b, sys, cfg);
  REQUIRE(ru.feasible);
  BarrierFunction bar;
  bar.b = b;
  bar.u = ru.u;
  bar.kappa = cfg.kappa;
  bar.certified = true;

  SUBCASE("dense sampling finds no violation") {
    auto rep = sampled_verify(bar, sys, 100000, 3, false);
    CHECK(rep.n_checked == 100000);
    CHECK(rep.n_violations == 0);
  }
  SUBCASE("parallel run agrees with serial") {
    auto rs = sampled_verify(bar, sys, 20000, 3, false);
    auto rp = sampled_verify(bar, sys, 20000, 3, true);
    CHECK(rs.n_violations == rp.n_violations);
    CHECK(rs.worst_cbf_margin == doctest::Approx(rp.worst_cbf_margin));
    CHECK(rs.worst_input_margin == doctest::Approx(rp.worst_input_margin));
  }
  SUBCASE("positive scaling preserves the sign pattern") {
    BarrierFunction bar2 = bar;
    bar2.b = bar.b * 2.0;
    auto r1 = sampled_verify(bar, sys, 20000, 5, false);
    auto r2 = sampled_verify(bar2, sys, 20000, 5, false);
    CHECK(r1.n_violations == 0);
    CHECK(r2.n_violations == 0);
    CHECK(r2.worst_danger_value <= 1e-9);
  }
  SUBCASE("corrupted barrier produces a witness") {
    BarrierFunction bad = bar;
    MultiPoly flip({"x"});
    flip.add_term({2}, 2.0);  // flips the x^2 coefficient to +1
    bad.b = bar.b + flip;
    auto rep = sampled_verify(bad, sys, 20000, 9, false);
    CHECK(rep.n_violations > 0);
    CHECK(rep.witness.size() == 1);
  }
}

TEST_CASE("seed barrier sublevel set fits the box") {
  Mat P(2, 2);
  P << 2.0, 0.3, 0.3, 1.0;
  Vec box(2);
  box << 0.5, 1.0;
  auto b = seed_barrier({"a", "c"}, P, box, 0.9);
  CHECK(b.eval(Vec::Zero(2)) == doctest::Approx(1.0));
  std::mt19937 rng(2);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  for (int t = 0; t < 5000; ++t) {
    Vec x(2);
    x << u(rng), u(rng);
    if (b.eval(x) >= 0.0) {
      CHECK(std::abs(x(0)) <= box(0));
      CHECK(std::abs(x(1)) <= box(1));
    }
  }
}

TEST_CASE("truck SOS system shape") {
  auto dyn = build_dynamics(TruckParams{});
  auto sys = truck_sos_system(dyn, 0.3, 0.1, 0.02, 2000.0, 0.2);
  CHECK(sys.field.size() == 8);
  CHECK(sys.danger.size() == 2);
  CHECK(sys.h_d.size() == 2);
  // vector field affine in the input: second input-derivative vanishes
  for (const auto& f : sys.field)
    CHECK(f.differentiate("df").differentiate("df").is_zero());
}

TEST_CASE("barrier file round trip is bit exact") {
  BarrierFunction bar;
  bar.kappa = 1.0 / 3.0;
  bar.certified = true;
  bar.b = one_d_barrier(0.123456789123456789);
  MultiPoly u({"x"});
  u.add_term({1}, -0.77777777777777779);
  bar.u = u;
  bar.e_log = {0.1, -1e-12, -0.25};
  const std::string path = "barrier_rt.txt";
  save_barrier(bar, path, 0xdeadbeefcafeULL);
  std::uint64_t h = 0;
  auto back = load_barrier(path, &h);
  CHECK(h == 0xdeadbeefcafeULL);
  CHECK(back.kappa == bar.kappa);
  CHECK(back.certified == bar.certified);
  REQUIRE(back.b.terms().size() == bar.b.terms().size());
  for (const auto& [e, c] : bar.b.terms()) CHECK(back.b.coeff(e) == c);
  for (const auto& [e, c] : bar.u.terms()) CHECK(back.u.coeff(e) == c);
  REQUIRE(back.e_log.size() == 3);
  for (int i = 0; i < 3; ++i) CHECK(back.e_log[i] == bar.e_log[i]);
  // saving the loaded barrier reproduces the file byte for byte
  const std::string path2 = "barrier_rt2.txt";
  save_barrier(back, path2, h);
  std::ifstream f1(path), f2(path2);
  std::stringstream s1, s2;
  s1 << f1.rdbuf();
  s2 << f2.rdbuf();
  CHECK(s1.str() == s2.str());
  std::remove(path.c_str());
  std::remove(path2.c_str());
}
