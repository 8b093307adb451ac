#pragma once

#include <string>
#include <vector>

#include "lk/bezier.hpp"
#include "lk/mlp.hpp"
#include "lk/sos_cbf.hpp"
#include "lk/tracking.hpp"
#include "lk/trajlib.hpp"

namespace lk {

// Replan triggers: horizon exhausted, road-curvature step, tracking error.
struct EventConfig {
  double rd_threshold = 0.005;     // rad/s
  double track_threshold = 0.15;   // on ||(e, edot)||
  void validate() const;
};

struct SupervisorConfig {
  double w1 = 1.0;
  double w2 = 10.0;
  double gamma = 1.0;              // Eq. 32 class-K gain, 1/s
  double u_max = 0.2;              // rad
  double fy_max = 2000.0;          // N, worst-case unmeasured side wind
  double episode_threshold = 1e-4; // rad, |du| above this counts as intervention
  void validate() const;
};

// One trained generator per training set, with the feature boxes used for
// severity-based selection (S2 preferred, S1 fallback, clamp beyond S1).
struct ChModels {
  MlpModel s1, s2;
  Vec s1_lo, s1_hi;
  Vec s2_lo, s2_hi;
  void validate() const;
};

// Table II feature ranges for a training set, in FeatureVec order.
void default_feature_ranges(HorizonTag tag, Vec& lo, Vec& hi);

struct ChEvent {
  double t = 0.0;  // absolute controller time
  std::string reason;
  Vec features;
};

struct ChState {
  double timer = 0.0;    // t-hat, seconds since last replan
  double clock = 0.0;    // absolute time, drives the event log
  BezierCurve active;
  double rd_at_plan = 0.0;
  HorizonTag tag = HorizonTag::S2;
  double du_last = 0.0;
  std::vector<ChEvent> log;
};

struct ChContext {
  LinearDynamics dyn;
  OutputChain chain;
  TrackerGains gains;
  BarrierFunction bar;
  ChModels models;
  EventConfig ev;
  SupervisorConfig sup;
};

// x^T P x + q^T x + c pulled out of a quadratic barrier polynomial; the
// closed-form filter needs grad b = 2 P x + q.
struct QuadParts {
  Mat8 P;
  Vec8 q;
  double c = 0.0;
};
QuadParts quadratic_parts(const MultiPoly& b);

FeatureVec state_features(const Vec8& x, double rd);

// First plan: queries the generator and pins the curve to the measured
// (z, zdot), keeping the generator's own initial curvature.
ChState ch_init(const ChContext& ctx, const Vec8& x, double rd);

struct Trigger {
  bool fire = false;
  std::string reason;  // "horizon" | "rd_step" | "tracking"
};
Trigger trigger_check(const ChContext& ctx, const ChState& ch, const Vec8& x,
                      double rd);

void replan(const ChContext& ctx, ChState& ch, const Vec8& x, double rd,
            const std::string& reason);

double nominal_control(const ChContext& ctx, const ChState& ch, const Vec8& x,
                       double rd);

struct FilterResult {
  double u = 0.0;
  double du = 0.0;
  bool saturated = false;  // Eq. 31 infeasible, bound nearest the half-line
};

// Closed-form Eq. 31/32: scalar projection of w2*du_old/(w1+w2) onto the
// intersection of the CBF half-line and the input box around u0.
FilterResult cbf_filter(double u0, const Vec8& x, double rd,
                        const LinearDynamics& dyn, const BarrierFunction& bar,
                        const SupervisorConfig& cfg, double du_old);

struct StepResult {
  double u0 = 0.0;
  double du = 0.0;
  double u = 0.0;
  bool replanned = false;
};

StepResult ch_step(const ChContext& ctx, ChState& ch, const Vec8& x, double rd,
                   double dt);

}  // namespace lk
