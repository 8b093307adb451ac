#include "lk/ch_supervisor.hpp"

#include <algorithm>
#include <cmath>

namespace lk {

void EventConfig::validate() const {
  if (!(rd_threshold > 0.0) || !(track_threshold > 0.0))
    throw ModelError("EventConfig: thresholds must be positive");
}

void SupervisorConfig::validate() const {
  if (!(w1 >= 0.0) || !(w2 >= 0.0) || !(w1 + w2 > 0.0))
    throw ModelError("SupervisorConfig: need w1, w2 >= 0 with w1 + w2 > 0");
  if (!(gamma > 0.0) || !(u_max > 0.0) || !(fy_max >= 0.0))
    throw ModelError("SupervisorConfig: gamma, u_max must be positive");
  if (!(episode_threshold > 0.0))
    throw ModelError("SupervisorConfig: episode_threshold must be positive");
}

void ChModels::validate() const {
  s1.validate();
  s2.validate();
  for (const Vec* v : {&s1_lo, &s1_hi, &s2_lo, &s2_hi})
    if (v->size() != 6) throw ModelError("ChModels: ranges must have size 6");
  if (((s1_hi - s1_lo).array() <= 0.0).any() ||
      ((s2_hi - s2_lo).array() <= 0.0).any())
    throw ModelError("ChModels: empty feature range");
}

void default_feature_ranges(HorizonTag tag, Vec& lo, Vec& hi) {
  hi.resize(6);
  if (tag == HorizonTag::S1)
    hi << 0.5, 0.04, 0.06, 0.04, 1.0, 0.03;
  else
    hi << 0.3, 0.04, 0.03, 0.04, 1.0, 0.025;
  lo = -hi;
}

QuadParts quadratic_parts(const MultiPoly& b) {
  const int n = static_cast<int>(b.vars().size());
  if (n != 8) throw ModelError("quadratic_parts: barrier must use 8 state vars");
  QuadParts out;
  out.P.setZero();
  out.q.setZero();
  for (const auto& [expo, coeff] : b.terms()) {
    int deg = 0, i0 = -1, i1 = -1;
    for (int i = 0; i < n; ++i) {
      deg += expo[i];
      if (expo[i] > 0) (i0 < 0 ? i0 : i1) = i;
    }
    if (deg == 0) {
      out.c = coeff;
    } else if (deg == 1) {
      out.q(i0) += coeff;
    } else if (deg == 2) {
      if (i1 < 0)
        out.P(i0, i0) += coeff;
      else {
        out.P(i0, i1) += 0.5 * coeff;
        out.P(i1, i0) += 0.5 * coeff;
      }
    } else {
      throw ModelError("quadratic_parts: barrier degree exceeds 2");
    }
  }
  return out;
}

FeatureVec state_features(const Vec8& x, double rd) {
  FeatureVec f;
  f.y = x(0);
  f.vy = x(1);
  f.psi = x(2);
  f.r = x(3);
  f.psia = x(4);
  f.rd = rd;
  return f;
}

namespace {

bool in_box(const Vec& v, const Vec& lo, const Vec& hi) {
  return (v.array() >= lo.array()).all() && (v.array() <= hi.array()).all();
}

// Queries the right generator for the feature; clamps beyond S1 and reports
// whether clamping happened.
BezierCurve query_generator(const ChContext& ctx, const Vec& fv,
                            HorizonTag& tag, bool& clamped) {
  const auto& m = ctx.models;
  clamped = false;
  Vec q = fv;
  const MlpModel* model = nullptr;
  if (in_box(fv, m.s2_lo, m.s2_hi)) {
    tag = HorizonTag::S2;
    model = &m.s2;
  } else {
    tag = HorizonTag::S1;
    model = &m.s1;
    if (!in_box(fv, m.s1_lo, m.s1_hi)) {
      q = fv.cwiseMax(m.s1_lo).cwiseMin(m.s1_hi);
      clamped = true;
    }
  }
  const Vec coeffs = model->forward(q);
  BezierCurve curve;
  curve.coeffs.assign(coeffs.data(), coeffs.data() + coeffs.size());
  curve.horizon = horizon_T(tag);
  curve.validate();
  return curve;
}

void log_event(ChState& ch, const std::string& reason, const Vec& fv) {
  ch.log.push_back({ch.clock, reason, fv});
}

}  // namespace

ChState ch_init(const ChContext& ctx, const Vec8& x, double rd) {
  const Vec fv = state_features(x, rd).as_vec();
  ChState ch;
  HorizonTag tag;
  bool clamped = false;
  BezierCurve raw = query_generator(ctx, fv, tag, clamped);
  if (clamped) log_event(ch, "extrapolation", fv);
  const double z = ctx.chain.c * x;
  const double zd = ctx.chain.cA * x + ctx.chain.dz_rd * rd;
  ch.active = splice_smooth(z, zd, raw.eval(0.0, 2), raw);
  ch.tag = tag;
  ch.rd_at_plan = rd;
  log_event(ch, "init", fv);
  return ch;
}

Trigger trigger_check(const ChContext& ctx, const ChState& ch, const Vec8& x,
                      double rd) {
  if (ch.timer >= ch.active.horizon) return {true, "horizon"};
  if (std::abs(rd - ch.rd_at_plan) > ctx.ev.rd_threshold)
    return {true, "rd_step"};
  const double t = std::min(ch.timer, ch.active.horizon);
  const double e = ctx.chain.c * x - ch.active.eval(t, 0);
  const double ed =
      ctx.chain.cA * x + ctx.chain.dz_rd * rd - ch.active.eval(t, 1);
  if (std::hypot(e, ed) > ctx.ev.track_threshold) return {true, "tracking"};
  return {};
}

void replan(const ChContext& ctx, ChState& ch, const Vec8& x, double rd,
            const std::string& reason) {
  const Vec fv = state_features(x, rd).as_vec();
  HorizonTag tag;
  bool clamped = false;
  BezierCurve raw = query_generator(ctx, fv, tag, clamped);
  if (clamped) log_event(ch, "extrapolation", fv);
  const double t = std::min(ch.timer, ch.active.horizon);
  ch.active = splice_smooth(ch.active.eval(t, 0), ch.active.eval(t, 1),
                            ch.active.eval(t, 2), raw);
  ch.tag = tag;
  ch.rd_at_plan = rd;
  ch.timer = 0.0;
  log_event(ch, reason, fv);
}

double nominal_control(const ChContext& ctx, const ChState& ch, const Vec8& x,
                       double rd) {
  const double t = std::clamp(ch.timer, 0.0, ch.active.horizon);
  return fl_track(x, rd, ch.active.eval(t, 0), ch.active.eval(t, 1),
                  ch.active.eval(t, 2), ctx.gains, ctx.chain);
}

FilterResult cbf_filter(double u0, const Vec8& x, double rd,
                        const LinearDynamics& dyn, const BarrierFunction& bar,
                        const SupervisorConfig& cfg, double du_old) {
  const QuadParts qp = quadratic_parts(bar.b);
  const double b = x.dot(qp.P * x) + qp.q.dot(x) + qp.c;
  const Vec8 grad = 2.0 * (qp.P * x) + qp.q;
  // Eq. 32 class-K term; the sigmoid branch meets gamma*b at b = 0.
  const double sig =
      b >= 0.0 ? cfg.gamma * b
               : cfg.gamma * (std::exp(b) - 1.0) / (std::exp(b) + 1.0);
  // bdot = q0 + l*u with worst-case side wind folded into the constant.
  const double l = grad.dot(dyn.B);
  const double q0 = grad.dot(dyn.A * x) + grad.dot(dyn.E1) * rd -
                    std::abs(grad.dot(dyn.E2)) * cfg.fy_max;
  // Constraint q0 + l*(u0 + du) + sig >= 0 on du, intersected with the box.
  double lo = -cfg.u_max - u0;
  double hi = cfg.u_max - u0;
  const double rhs = -(q0 + l * u0 + sig);
  FilterResult out;
  const double du_star = cfg.w2 * du_old / (cfg.w1 + cfg.w2);
  constexpr double kTinyL = 1e-12;
  if (std::abs(l) > kTinyL) {
    const double edge = rhs / l;
    if (l > 0.0) {
      if (edge > hi) {  // infeasible: saturate toward the half-line
        out.du = hi;
        out.saturated = true;
      } else {
        out.du = std::clamp(du_star, std::max(lo, edge), hi);
      }
    } else {
      if (edge < lo) {
        out.du = lo;
        out.saturated = true;
      } else {
        out.du = std::clamp(du_star, lo, std::min(hi, edge));
      }
    }
  } else {
    // No control authority on bdot; feasibility is whatever it is.
    out.du = std::clamp(du_star, lo, hi);
    out.saturated = rhs > 0.0;
  }
  out.u = u0 + out.du;
  return out;
}

StepResult ch_step(const ChContext& ctx, ChState& ch, const Vec8& x, double rd,
                   double dt) {
  if (!(dt > 0.0)) throw ModelError("ch_step: dt must be positive");
  StepResult res;
  const Trigger trig = trigger_check(ctx, ch, x, rd);
  if (trig.fire) {
    replan(ctx, ch, x, rd, trig.reason);
    res.replanned = true;
  }
  res.u0 = nominal_control(ctx, ch, x, rd);
  const FilterResult f =
      cbf_filter(res.u0, x, rd, ctx.dyn, ctx.bar, ctx.sup, ch.du_last);
  res.du = f.du;
  res.u = f.u;
  ch.du_last = f.du;
  ch.timer += dt;
  ch.clock += dt;
  return res;
}

}  // namespace lk
