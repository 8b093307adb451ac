#pragma once

#include <string>
#include <vector>

#include "lk/ch_supervisor.hpp"
#include "lk/config.hpp"

namespace lk {

struct RoadSegment {
  double duration = 0.0;  // s
  double rd = 0.0;        // rad/s
};

// Deterministic closed-loop scenario: piecewise-constant road curvature,
// square-wave side wind, and an optional square-wave lane-offset injection
// (the state's y jumps by +/- offset_amp each half period).
struct Scenario {
  std::string name = "nominal";
  double duration = 120.0;       // s
  double dt = 0.001;             // integrator step, s
  double control_period = 0.01;  // s
  std::vector<RoadSegment> road;
  double wind_amp = 0.0;     // N
  double wind_period = 20.0; // s
  double wind_phase = 0.0;   // s
  double offset_amp = 0.0;    // m
  double offset_period = 0.0; // s, 0 disables the injection
  Vec8 x0 = Vec8::Zero();
  unsigned seed = 0;

  void validate() const;  // Table-I envelope: |rd| <= 0.02, wind <= 2000 N
  double rd_at(double t) const;
  double wind_at(double t) const;
};

Scenario scenario_from_config(const Config& cfg);
// Built-in scenario library: "straight", "nominal", "offset".
Scenario make_scenario(const std::string& name);

struct SimSample {
  double t = 0.0;
  Vec8 x = Vec8::Zero();
  double z = 0.0, h_des = 0.0;
  double u0 = 0.0, du = 0.0, u = 0.0;
  double b = 0.0, rd = 0.0, fy = 0.0;
  int event = 0;  // 1 on controller samples where a replan fired
};

struct SimTrace {
  std::vector<SimSample> rows;  // one per controller sample, plus the final
  std::vector<ChEvent> events;
  bool aborted = false;
  std::string abort_reason;
};

enum class ControllerKind { Learned, Lqr };

// One fixed-step RK4 step of the plant with held input and disturbances.
Vec8 plant_step(const LinearDynamics& dyn, const Vec8& x, double u, double rd,
                double fy, double dt);

SimTrace run_scenario(const Scenario& sc, ControllerKind kind,
                      const ChContext& ctx, const LqrBaseline& lqr);

struct Metrics {
  double min_b = 0.0;
  double max_abs_y = 0.0;    // m
  double max_abs_phi = 0.0;  // rad
  int interventions = 0;     // |du| > threshold episodes
  double du_energy = 0.0;    // integral of du^2, rad^2 s
  double jerk_rms = 0.0;     // RMS rate of zddot
  double max_abs_u = 0.0;    // rad
  int replans = 0;
};

Metrics compute_metrics(const SimTrace& trace, const ChContext& ctx);

struct Comparison {
  Metrics learned;
  Metrics baseline;
  double intervention_ratio = 0.0;  // learned / baseline, inf-safe
  double du_energy_ratio = 0.0;
};

Comparison compare(const Scenario& sc, const ChContext& ctx,
                   const LqrBaseline& lqr);

// Versioned CSV: one header row, one row per controller sample, SimTrace
// field order, shortest round-trip formatting.
void write_trace_csv(const SimTrace& trace, const std::string& path);
std::string metrics_summary(const Metrics& m);

}  // namespace lk
