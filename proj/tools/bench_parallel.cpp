// Serial-vs-OpenMP timing for the two embarrassingly parallel kernels:
// trajectory-library generation and sampled barrier verification.  Both
// paths must also agree bitwise / numerically, which is asserted here.
#include <chrono>
#include <cstdio>
#include <cstring>

#include "lk/ch_supervisor.hpp"
#include "lk/sos_cbf.hpp"
#include "lk/trajlib.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace lk;

namespace {

double now_s() {
  using clk = std::chrono::steady_clock;
  return std::chrono::duration<double>(clk::now().time_since_epoch()).count();
}

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
  double level = 0.0;
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

}  // namespace

int main() {
#ifdef _OPENMP
  std::printf("openmp threads: %d\n", omp_get_max_threads());
#else
  std::printf("openmp: compiled out (serial build)\n");
#endif

  // library generation
  const TrajContext ctx = make_context();
  Vec lo, hi;
  default_feature_ranges(HorizonTag::S2, lo, hi);
  const auto plan = grid_plan(lo, hi, {2, 2, 1, 1, 2, 2});
  TrajOptSpec base;
  double t0 = now_s();
  const auto ser = batch_generate(plan, HorizonTag::S2, ctx, base, false);
  double t1 = now_s();
  const auto par = batch_generate(plan, HorizonTag::S2, ctx, base, true);
  double t2 = now_s();
  bool same = ser.records.size() == par.records.size();
  for (std::size_t i = 0; same && i < ser.records.size(); ++i)
    same = std::memcmp(ser.records[i].coeffs.data(), par.records[i].coeffs.data(),
                       sizeof(double) * 9) == 0;
  std::printf("batch_generate %zu pts: serial %.2fs  parallel %.2fs  "
              "speedup %.2fx  identical=%d\n",
              plan.size(), t1 - t0, t2 - t1, (t1 - t0) / (t2 - t1), same);

  // sampled verification
  auto sys = truck_sos_system(ctx.dyn, 0.3, 0.1, 0.02, 2000.0, 0.2);
  BarrierFunction bar;
  bar.b = quadratic_form(sys.state_vars, Mat(ctx.bar.P), Vec::Zero(8), 1.0);
  bar.u = MultiPoly(sys.state_vars);
  const int n = 200000;
  t0 = now_s();
  const auto rs = sampled_verify(bar, sys, n, 1, false);
  t1 = now_s();
  const auto rp = sampled_verify(bar, sys, n, 1, true);
  t2 = now_s();
  std::printf("sampled_verify %d pts: serial %.2fs  parallel %.2fs  "
              "speedup %.2fx  identical=%d\n",
              n, t1 - t0, t2 - t1, (t1 - t0) / (t2 - t1),
              rs.n_violations == rp.n_violations &&
                  rs.worst_cbf_margin == rp.worst_cbf_margin);
  return (same && rs.n_violations == rp.n_violations) ? 0 : 1;
}
