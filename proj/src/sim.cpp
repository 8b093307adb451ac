#include "lk/sim.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace lk {

void Scenario::validate() const {
  if (!(duration > 0.0) || !(dt > 0.0) || !(control_period > 0.0))
    throw ModelError("Scenario: duration, dt, control_period must be positive");
  const double sub = control_period / dt;
  if (std::abs(sub - std::round(sub)) > 1e-9)
    throw ModelError("Scenario: control_period must be a multiple of dt");
  for (const auto& seg : road) {
    if (!(seg.duration > 0.0))
      throw ModelError("Scenario: road segment duration must be positive");
    if (std::abs(seg.rd) > 0.02 + 1e-12)
      throw ModelError("Scenario: |r_d| exceeds the 1000 m radius envelope");
  }
  if (wind_amp < 0.0 || wind_amp > 2000.0 + 1e-9)
    throw ModelError("Scenario: wind amplitude outside [0, 2000] N");
  if ((wind_amp > 0.0 && !(wind_period > 0.0)) || offset_amp < 0.0 ||
      (offset_amp > 0.0 && !(offset_period > 0.0)))
    throw ModelError("Scenario: wave periods must be positive when active");
}

double Scenario::rd_at(double t) const {
  double acc = 0.0;
  for (const auto& seg : road) {
    acc += seg.duration;
    if (t < acc) return seg.rd;
  }
  return road.empty() ? 0.0 : road.back().rd;
}

double Scenario::wind_at(double t) const {
  if (wind_amp == 0.0) return 0.0;
  double s = std::fmod(t - wind_phase, wind_period);
  if (s < 0.0) s += wind_period;
  return s < 0.5 * wind_period ? wind_amp : -wind_amp;
}

Scenario scenario_from_config(const Config& cfg) {
  Scenario sc;
  sc.name = cfg.get_string("name", sc.name);
  sc.duration = cfg.get_double("duration", sc.duration);
  sc.dt = cfg.get_double("dt", sc.dt);
  sc.control_period = cfg.get_double("control_period", sc.control_period);
  if (cfg.has("road_durations")) {
    const auto durs = cfg.get_doubles("road_durations");
    const auto rds = cfg.get_doubles("road_rds");
    if (durs.size() != rds.size())
      throw ModelError("scenario: road_durations/road_rds length mismatch");
    for (std::size_t i = 0; i < durs.size(); ++i)
      sc.road.push_back({durs[i], rds[i]});
  }
  sc.wind_amp = cfg.get_double("wind_amp", sc.wind_amp);
  sc.wind_period = cfg.get_double("wind_period", sc.wind_period);
  sc.wind_phase = cfg.get_double("wind_phase", sc.wind_phase);
  sc.offset_amp = cfg.get_double("offset_amp", sc.offset_amp);
  sc.offset_period = cfg.get_double("offset_period", sc.offset_period);
  if (cfg.has("x0")) {
    const auto v = cfg.get_doubles("x0");
    if (v.size() != 8) throw ModelError("scenario: x0 needs 8 entries");
    for (int i = 0; i < 8; ++i) sc.x0(i) = v[i];
  }
  sc.seed = static_cast<unsigned>(cfg.get_int("seed", 0));
  cfg.require_known({"name", "duration", "dt", "control_period",
                     "road_durations", "road_rds", "wind_amp", "wind_period",
                     "wind_phase", "offset_amp", "offset_period", "x0",
                     "seed"});
  sc.validate();
  return sc;
}

Scenario make_scenario(const std::string& name) {
  Scenario sc;
  sc.name = name;
  if (name == "straight") {
    sc.duration = 30.0;
  } else if (name == "nominal") {
    // curved road at the 1000 m radius envelope with max square-wave wind
    sc.duration = 120.0;
    sc.road = {{20.0, 0.0}, {25.0, 0.015}, {25.0, -0.02},
               {25.0, 0.01}, {25.0, 0.0}};
    sc.wind_amp = 2000.0;
    sc.wind_period = 20.0;
    sc.wind_phase = 5.0;
  } else if (name == "offset") {
    // repeated 0.5 m lane-offset injections on a straight road
    sc.duration = 60.0;
    sc.offset_amp = 0.5;
    sc.offset_period = 20.0;
  } else {
    throw ModelError("unknown scenario: " + name);
  }
  sc.validate();
  return sc;
}

Vec8 plant_step(const LinearDynamics& dyn, const Vec8& x, double u, double rd,
                double fy, double dt) {
  const Vec8 c = dyn.B * u + dyn.E1 * rd + dyn.E2 * fy;
  const Vec8 k1 = dyn.A * x + c;
  const Vec8 k2 = dyn.A * (x + 0.5 * dt * k1) + c;
  const Vec8 k3 = dyn.A * (x + 0.5 * dt * k2) + c;
  const Vec8 k4 = dyn.A * (x + dt * k3) + c;
  return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

SimTrace run_scenario(const Scenario& sc, ControllerKind kind,
                      const ChContext& ctx, const LqrBaseline& lqr) {
  sc.validate();
  const int n_sub = static_cast<int>(std::round(sc.control_period / sc.dt));
  const int steps = static_cast<int>(std::round(sc.duration / sc.control_period));
  const auto parts = quadratic_parts(ctx.bar.b);
  const bool learned = kind == ControllerKind::Learned;

  SimTrace tr;
  tr.rows.reserve(steps + 1);
  Vec8 x = sc.x0;
  int next_jump = 0;  // half-period index of the next offset injection
  auto inject = [&](double t) {
    while (sc.offset_amp > 0.0 &&
           next_jump * 0.5 * sc.offset_period <= t + 1e-9) {
      x(0) += (next_jump % 2 == 0 ? 1.0 : -1.0) * sc.offset_amp;
      ++next_jump;
    }
  };
  inject(0.0);

  ChState ch;
  double du_last = 0.0;
  if (learned) ch = ch_init(ctx, x, sc.rd_at(0.0));

  for (int k = 0; k <= steps; ++k) {
    const double t = k * sc.control_period;
    if (k > 0) inject(t);
    const double rd = sc.rd_at(t);
    const double fy = sc.wind_at(t);

    SimSample row;
    row.t = t;
    if (learned) {
      const StepResult s = ch_step(ctx, ch, x, rd, sc.control_period);
      row.u0 = s.u0;
      row.du = s.du;
      row.u = s.u;
      row.event = s.replanned ? 1 : 0;
      row.h_des = ch.active.eval(
          std::max(0.0, ch.timer - sc.control_period), 0);
    } else {
      const double u0 = -lqr.K.dot(x) + lqr.kff * rd;
      const FilterResult f =
          cbf_filter(u0, x, rd, ctx.dyn, ctx.bar, ctx.sup, du_last);
      du_last = f.du;
      row.u0 = u0;
      row.du = f.du;
      row.u = f.u;
    }
    row.x = x;
    row.z = ctx.chain.c * x;
    row.b = x.dot(parts.P * x) + parts.q.dot(x) + parts.c;
    row.rd = rd;
    row.fy = fy;
    tr.rows.push_back(row);
    if (k == steps) break;

    for (int i = 0; i < n_sub; ++i) {
      const double ts = t + i * sc.dt;
      x = plant_step(ctx.dyn, x, row.u, sc.rd_at(ts), sc.wind_at(ts), sc.dt);
      if (!x.allFinite()) {
        tr.aborted = true;
        tr.abort_reason = "non-finite state at t=" + std::to_string(ts);
        break;
      }
    }
    if (tr.aborted) break;
  }
  if (learned) tr.events = ch.log;
  return tr;
}

Metrics compute_metrics(const SimTrace& trace, const ChContext& ctx) {
  Metrics m;
  if (trace.rows.empty()) return m;
  m.min_b = std::numeric_limits<double>::infinity();
  const double thr = ctx.sup.episode_threshold;
  const double dt = trace.rows.size() > 1
                        ? trace.rows[1].t - trace.rows[0].t
                        : 0.0;
  bool in_episode = false;
  std::vector<double> zdd;
  zdd.reserve(trace.rows.size());
  for (const auto& r : trace.rows) {
    m.min_b = std::min(m.min_b, r.b);
    m.max_abs_y = std::max(m.max_abs_y, std::abs(r.x(0)));
    m.max_abs_phi = std::max(m.max_abs_phi, std::abs(r.x(6)));
    m.max_abs_u = std::max(m.max_abs_u, std::abs(r.u));
    m.du_energy += r.du * r.du * dt;
    m.replans += r.event;
    const bool above = std::abs(r.du) > thr;
    if (above && !in_episode) ++m.interventions;
    in_episode = above;
    zdd.push_back(ctx.chain.cA2.dot(r.x) + ctx.chain.lglfh * r.u +
                  ctx.chain.lfgd1h * r.rd);
  }
  if (zdd.size() > 1 && dt > 0.0) {
    double acc = 0.0;
    for (std::size_t i = 1; i < zdd.size(); ++i) {
      const double rate = (zdd[i] - zdd[i - 1]) / dt;
      acc += rate * rate;
    }
    m.jerk_rms = std::sqrt(acc / (zdd.size() - 1));
  }
  return m;
}

Comparison compare(const Scenario& sc, const ChContext& ctx,
                   const LqrBaseline& lqr) {
  Comparison cmp;
  cmp.learned =
      compute_metrics(run_scenario(sc, ControllerKind::Learned, ctx, lqr), ctx);
  cmp.baseline =
      compute_metrics(run_scenario(sc, ControllerKind::Lqr, ctx, lqr), ctx);
  auto ratio = [](double a, double b) {
    if (b > 0.0) return a / b;
    return a == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
  };
  cmp.intervention_ratio = ratio(cmp.learned.interventions,
                                 cmp.baseline.interventions);
  cmp.du_energy_ratio = ratio(cmp.learned.du_energy, cmp.baseline.du_energy);
  return cmp;
}

void write_trace_csv(const SimTrace& trace, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ModelError("cannot write trace: " + path);
  // the exact header string is the schema version
  os << "t,y,vy,psi,r,psia,rs,phi,p,z,h_des,u0,du,u,b,rd,fy,event\n";
  char buf[32];
  auto put = [&](double v, char sep) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    os << buf << sep;
  };
  for (const auto& r : trace.rows) {
    put(r.t, ',');
    for (int i = 0; i < 8; ++i) put(r.x(i), ',');
    put(r.z, ',');
    put(r.h_des, ',');
    put(r.u0, ',');
    put(r.du, ',');
    put(r.u, ',');
    put(r.b, ',');
    put(r.rd, ',');
    put(r.fy, ',');
    os << r.event << "\n";
  }
  if (!os) throw ModelError("short write on trace: " + path);
}

std::string metrics_summary(const Metrics& m) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "min_b=%.6g\nmax_abs_y=%.6g\nmax_abs_phi=%.6g\n"
                "interventions=%d\ndu_energy=%.6g\njerk_rms=%.6g\n"
                "max_abs_u=%.6g\nreplans=%d\n",
                m.min_b, m.max_abs_y, m.max_abs_phi, m.interventions,
                m.du_energy, m.jerk_rms, m.max_abs_u, m.replans);
  return buf;
}

}  // namespace lk
