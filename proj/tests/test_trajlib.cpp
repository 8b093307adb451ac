#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "lk/tracking.hpp"
#include "lk/trajlib.hpp"

using namespace lk;

namespace {

TrajContext make_context() {
  TrajContext ctx;
  ctx.dyn = build_dynamics(TruckParams{});
  ctx.chain = output_chain(ctx.dyn, 1.0, 20.0);
  Mat8 Q = Mat8::Zero();
  Q(0, 0) = 10.0;
  Q(2, 2) = 10.0;
  for (int i : {1, 3, 4, 5, 6, 7}) Q(i, i) = 0.1;
  auto lqr = lqr_baseline(ctx.dyn, Q, 1.0);
  ctx.P_lyap = lqr.P;
  ctx.gamma = build_insertion_map(ctx.dyn, ctx.chain);
  // generous Lyapunov sublevel barrier covering the S2 feature box
  Vec lo, hi;
  std::tie(lo, hi) = std::pair<Vec, Vec>(Vec(6), Vec(6));
  double level = 2.0 * equilibrium(ctx.dyn, ctx.chain, 0.025)
                           .x.dot(lqr.P * equilibrium(ctx.dyn, ctx.chain, 0.025).x);
  for (int d = 0; d < 8; ++d) {
    Vec8 corner = Vec8::Zero();
    corner(d) = (d == 0) ? 1.0 : 0.5;
    level = std::max(level, 2.0 * corner.dot(lqr.P * corner));
  }
  ctx.bar.P = -lqr.P / level;
  ctx.bar.c0 = 1.0;
  ctx.bar.kappa = 1.0;
  return ctx;
}

// Table II S2 ranges: [y, psi, r, psi_a, v_y, r_d]
void s2_ranges(Vec& lo, Vec& hi) {
  lo.resize(6);
  hi.resize(6);
  hi << 0.3, 0.04, 0.03, 0.04, 1.0, 0.025;
  lo = -hi;
}

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("grid_plan") {
  SUBCASE("all-one counts centered at zero") {
    Vec lo = Vec::Constant(6, -0.2), hi = Vec::Constant(6, 0.2);
    auto plan = grid_plan(lo, hi, {1, 1, 1, 1, 1, 1});
    REQUIRE(plan.size() == 1);
    CHECK(plan[0].as_vec().cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("3^6 grid has 729 points") {
    Vec lo, hi;
    s2_ranges(lo, hi);
    auto plan = grid_plan(lo, hi, {3, 3, 3, 3, 3, 3});
    CHECK(plan.size() == 729);
    // endpoints included, row-major with the last feature fastest
    CHECK(plan[0].as_vec().isApprox(lo));
    CHECK(plan[728].as_vec().isApprox(hi));
    CHECK(plan[1].rd == doctest::Approx(0.0));
    CHECK(plan[1].y == doctest::Approx(lo(0)));
  }
  SUBCASE("empty range rejected") {
    Vec lo = Vec::Zero(6), hi = Vec::Zero(6);
    hi(2) = -1.0;
    CHECK_THROWS_AS(grid_plan(lo, hi, {1, 1, 1, 1, 1, 1}), LibError);
    CHECK_THROWS_AS(grid_plan(Vec::Zero(6), Vec::Zero(6), {0, 1, 1, 1, 1, 1}),
                    LibError);
  }
}

TEST_CASE("feature-to-state lift uses the insertion map") {
  auto ctx = make_context();
  FeatureVec f;
  f.y = 0.2;
  f.psi = 0.01;
  f.r = -0.02;
  f.psia = 0.03;
  f.vy = -0.4;
  f.rd = 0.015;
  const Vec8 x0 = lift_state(f, ctx.gamma);
  CHECK(x0(0) == f.y);
  CHECK(x0(1) == f.vy);
  CHECK(x0(2) == f.psi);
  CHECK(x0(3) == f.r);
  CHECK(x0(4) == f.psia);
  CHECK((ctx.gamma.mismatch() * x0).norm() <= 1e-12);
}

TEST_CASE("batch_generate: trivial plan") {
  auto ctx = make_context();
  std::vector<FeatureVec> plan(1);  // equilibrium feature for r_d = 0
  auto lib = batch_generate(plan, HorizonTag::S2, ctx, TrajOptSpec{}, false);
  REQUIRE(lib.records.size() == 1);
  CHECK(lib.infeasible_count == 0);
  CHECK(lib.records[0].feasible);
  CHECK(lib.records[0].coeffs.cwiseAbs().maxCoeff() <= 1e-6);
  CHECK(lib.records[0].cost <= 1e-9);
}

TEST_CASE("batch_generate: desk-scale census, symmetry, determinism") {
  auto ctx = make_context();
  Vec lo, hi;
  s2_ranges(lo, hi);

  SUBCASE("3^6 S2 grid is >= 90% feasible") {
    auto plan = grid_plan(lo, hi, {3, 3, 3, 3, 3, 3});
    auto lib = batch_generate(plan, HorizonTag::S2, ctx, TrajOptSpec{}, true);
    CHECK(lib.records.size() + lib.infeasible_count == 729);
    CHECK(lib.records.size() >= 657);  // 0.9 * 729
  }
  SUBCASE("parallel and serial agree; mirrored grid mirrors the rows") {
    auto plan = grid_plan(lo, hi, {3, 1, 3, 1, 1, 3});
    auto par = batch_generate(plan, HorizonTag::S2, ctx, TrajOptSpec{}, true);
    auto ser = batch_generate(plan, HorizonTag::S2, ctx, TrajOptSpec{}, false);
    REQUIRE(par.records.size() == ser.records.size());
    for (std::size_t i = 0; i < par.records.size(); ++i)
      CHECK((par.records[i].coeffs - ser.records[i].coeffs)
                .cwiseAbs()
                .maxCoeff() == 0.0);

    std::vector<FeatureVec> mirrored;
    for (const auto& f : plan)
      mirrored.push_back(FeatureVec::from_vec(-f.as_vec()));
    auto mir =
        batch_generate(mirrored, HorizonTag::S2, ctx, TrajOptSpec{}, true);
    REQUIRE(mir.records.size() == par.records.size());
    for (std::size_t i = 0; i < par.records.size(); ++i)
      CHECK((mir.records[i].coeffs + par.records[i].coeffs)
                .cwiseAbs()
                .maxCoeff() <= 1e-4);
  }
}

TEST_CASE("library save/load") {
  const std::string path = "test_lib.bin";

  SUBCASE("empty library round trip") {
    LibraryFile lib;
    lib.header.config_hash = 0xdeadbeefULL;
    save_library(lib, path);
    auto back = load_library(path, 0xdeadbeefULL);
    CHECK(back.records.empty());
    CHECK(back.header.config_hash == 0xdeadbeefULL);
  }
  SUBCASE("populated library: bit-exact and byte-identical") {
    auto ctx = make_context();
    Vec lo, hi;
    s2_ranges(lo, hi);
    auto plan = grid_plan(lo, hi, {3, 1, 1, 1, 1, 3});
    auto lib = batch_generate(plan, HorizonTag::S1, ctx, TrajOptSpec{}, true);
    REQUIRE(!lib.records.empty());
    lib.header.config_hash = 42;
    lib.header.counts = {3, 1, 1, 1, 1, 3};
    save_library(lib, path);
    auto back = load_library(path, 42);
    REQUIRE(back.records.size() == lib.records.size());
    for (std::size_t i = 0; i < lib.records.size(); ++i) {
      CHECK(back.records[i].coeffs == lib.records[i].coeffs);
      CHECK(back.records[i].cost == lib.records[i].cost);
      CHECK(back.records[i].f.as_vec() == lib.records[i].f.as_vec());
      CHECK(back.records[i].tag == lib.records[i].tag);
    }
    save_library(back, "test_lib2.bin");
    CHECK(slurp(path) == slurp("test_lib2.bin"));
    std::remove("test_lib2.bin");
  }
  SUBCASE("hash mismatch refused") {
    LibraryFile lib;
    lib.header.config_hash = 7;
    save_library(lib, path);
    CHECK_THROWS_AS(load_library(path, 8), LibError);
    CHECK_NOTHROW(load_library(path));  // unchecked load still works
  }
  SUBCASE("truncated file rejected") {
    LibraryFile lib;
    TrajRecord rec;
    rec.feasible = true;
    lib.records.assign(3, rec);
    save_library(lib, path);
    auto bytes = slurp(path);
    std::ofstream os(path, std::ios::binary);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 10));
    os.close();
    CHECK_THROWS_AS(load_library(path), LibError);
  }
  std::remove(path.c_str());
}
