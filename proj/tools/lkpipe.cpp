// Pipeline driver: barrier synthesis -> trajectory library -> training ->
// closed-loop simulation -> comparison report.  Artifacts live in a cache
// directory (LK_ARTIFACT_DIR or --artifacts) and are keyed by the config
// hash so stale upstream files are refused.
#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "lk/ch_supervisor.hpp"
#include "lk/sim.hpp"

namespace fs = std::filesystem;
using namespace lk;

namespace {

struct Pipeline {
  Config cfg;
  std::string art;
  TruckParams params;
  LinearDynamics dyn;
  OutputChain chain;
  LqrBaseline lqr;
  std::uint64_t hash = 0;
};

Pipeline load_pipeline(const std::string& config_path, std::string art) {
  Pipeline p;
  p.cfg = Config::from_file(config_path);
  p.hash = p.cfg.hash();
  if (art.empty()) {
    const char* env = std::getenv("LK_ARTIFACT_DIR");
    art = env ? env : "artifacts";
  }
  p.art = art;
  fs::create_directories(p.art);
  p.params = TruckParams::from_config(p.cfg);
  p.dyn = build_dynamics(p.params);
  p.chain = output_chain(p.dyn, p.params.preview_time, p.params.vx);
  Mat8 Q = Mat8::Zero();
  const auto qd = p.cfg.has("lyap.q")
                      ? p.cfg.get_doubles("lyap.q")
                      : std::vector<double>{10, 0.1, 10, 0.1, 0.1,
                                            0.1, 0.1, 0.1};
  if (qd.size() != 8) throw ModelError("config: lyap.q needs 8 entries");
  for (int i = 0; i < 8; ++i) Q(i, i) = qd[i];
  p.lqr = lqr_baseline(p.dyn, Q, p.cfg.get_double("lyap.r", 1.0));
  return p;
}

std::string barrier_path(const Pipeline& p) { return p.art + "/barrier.bin"; }
std::string lib_path(const Pipeline& p, HorizonTag t) {
  return p.art + (t == HorizonTag::S1 ? "/lib_s1.bin" : "/lib_s2.bin");
}
std::string model_path(const Pipeline& p, HorizonTag t) {
  return p.art + (t == HorizonTag::S1 ? "/model_s1.bin" : "/model_s2.bin");
}

[[noreturn]] void missing_artifact(const std::string& path,
                                   const std::string& producer) {
  std::fprintf(stderr, "error: code=missing-artifact path=%s run=%s\n",
               path.c_str(), producer.c_str());
  std::exit(2);
}

void need(const std::string& path, const std::string& producer) {
  if (!fs::exists(path)) missing_artifact(path, producer);
}

BarrierFunction load_checked_barrier(const Pipeline& p) {
  need(barrier_path(p), "synth-cbf");
  std::uint64_t stored = 0;
  BarrierFunction bar = load_barrier(barrier_path(p), &stored);
  if (stored != p.hash) {
    std::fprintf(stderr,
                 "error: code=stale-artifact path=%s run=synth-cbf\n",
                 barrier_path(p).c_str());
    std::exit(2);
  }
  return bar;
}

Vec safety_box(const Pipeline& p) {
  Vec box(8);
  const double y_max = p.cfg.get_double("safe.y_max", 0.3);
  const double phi_max = p.cfg.get_double("safe.phi_max", 0.1);
  if (p.cfg.has("safe.box")) {
    const auto v = p.cfg.get_doubles("safe.box");
    if (v.size() != 8) throw ModelError("config: safe.box needs 8 entries");
    for (int i = 0; i < 8; ++i) box(i) = v[i];
  } else {
    box << y_max, 1.0, 0.04, 0.06, 0.04, 0.06, phi_max, 0.1;
  }
  return box;
}

HorizonTag parse_set(const std::string& s) {
  if (s == "s1") return HorizonTag::S1;
  if (s == "s2") return HorizonTag::S2;
  throw ModelError("--set must be s1 or s2");
}

std::array<int, 6> set_counts(const Pipeline& p, HorizonTag tag) {
  const std::string key =
      tag == HorizonTag::S1 ? "lib.s1_counts" : "lib.s2_counts";
  std::array<int, 6> counts = {3, 3, 1, 1, 3, 3};
  if (p.cfg.has(key)) {
    const auto v = p.cfg.get_doubles(key);
    if (v.size() != 6) throw ModelError("config: " + key + " needs 6 entries");
    for (int i = 0; i < 6; ++i) counts[i] = static_cast<int>(v[i]);
  }
  return counts;
}

TrajContext make_traj_context(const Pipeline& p, const BarrierFunction& bar) {
  TrajContext ctx;
  ctx.dyn = p.dyn;
  ctx.chain = p.chain;
  const std::vector<std::string> vars = {"y",    "vy", "psi", "r",
                                         "psia", "rs", "phi", "p"};
  ctx.bar = quad_barrier(bar.b, vars, bar.kappa);
  ctx.P_lyap = p.lqr.P;
  ctx.gamma = build_insertion_map(ctx.dyn, ctx.chain);
  return ctx;
}

TrainConfig train_config(const Pipeline& p, HorizonTag tag) {
  TrainConfig tc;
  // desk-scale grids are small; a linear readout generalizes where the
  // deep default would memorize
  tc.hidden.clear();
  if (p.cfg.has("train.hidden"))
    for (double h : p.cfg.get_doubles("train.hidden"))
      tc.hidden.push_back(static_cast<int>(h));
  tc.lr = p.cfg.get_double("train.lr", 0.01);
  tc.lr_decay = p.cfg.get_double("train.lr_decay", 0.995);
  tc.batch = p.cfg.get_int("train.batch", 32);
  tc.epochs = p.cfg.get_int("train.epochs", 800);
  tc.train_fraction = p.cfg.get_double("train.train_fraction", 0.85);
  tc.seed = static_cast<unsigned>(p.cfg.get_int("train.seed", 1)) +
            (tag == HorizonTag::S1 ? 0 : 1);
  tc.validate();
  return tc;
}

ChContext make_ch_context(const Pipeline& p) {
  ChContext ctx;
  ctx.dyn = p.dyn;
  ctx.chain = p.chain;
  ctx.bar = load_checked_barrier(p);
  for (HorizonTag tag : {HorizonTag::S1, HorizonTag::S2}) {
    need(model_path(p, tag), "train");
    need(lib_path(p, tag), "build-lib");
    auto model = load_mlp(model_path(p, tag));
    const auto lib = load_library(lib_path(p, tag), p.hash);
    if (tag == HorizonTag::S1) {
      ctx.models.s1 = std::move(model);
      ctx.models.s1_lo = lib.header.lo;
      ctx.models.s1_hi = lib.header.hi;
    } else {
      ctx.models.s2 = std::move(model);
      ctx.models.s2_lo = lib.header.lo;
      ctx.models.s2_hi = lib.header.hi;
    }
  }
  ctx.models.validate();
  ctx.gains.kp = p.cfg.get_double("track.kp", 9.0);
  ctx.gains.kd = p.cfg.get_double("track.kd", 6.0);
  ctx.ev.rd_threshold = p.cfg.get_double("ev.rd_threshold", 0.005);
  ctx.ev.track_threshold = p.cfg.get_double("ev.track_threshold", 0.15);
  ctx.sup.w1 = p.cfg.get_double("sup.w1", 1.0);
  ctx.sup.w2 = p.cfg.get_double("sup.w2", 10.0);
  ctx.sup.gamma = p.cfg.get_double("sup.gamma", ctx.bar.kappa);
  ctx.sup.u_max = p.cfg.get_double("safe.u_max", 0.2);
  ctx.sup.fy_max = p.cfg.get_double("sup.fy_max",
                                    p.cfg.get_double("safe.fy_max", 2000.0));
  ctx.sup.episode_threshold = p.cfg.get_double("sup.episode_threshold", 1e-4);
  ctx.ev.validate();
  ctx.sup.validate();
  return ctx;
}

Scenario resolve_scenario(const std::string& name) {
  if (fs::exists(name))
    return scenario_from_config(Config::from_file(name));
  const std::string local = "scenarios/" + name + ".cfg";
  if (fs::exists(local))
    return scenario_from_config(Config::from_file(local));
  return make_scenario(name);
}

int cmd_synth(const Pipeline& p) {
  SosConfig sos = SosConfig::from_config(p.cfg);
  const auto res = synthesize_truck_cbf(
      p.dyn, safety_box(p), p.cfg.get_double("safe.rd_max", 0.02),
      p.cfg.get_double("safe.fy_max", 2000.0),
      p.cfg.get_double("safe.u_max", 0.2), sos);
  const int n_samples = p.cfg.get_int("sos.verify_samples", 20000);
  const auto rep = sampled_verify(res.scaled, res.sys, n_samples, 1, true);
  std::printf("synth-cbf: certified=%d iterations=%zu\n",
              res.scaled.certified ? 1 : 0, res.scaled.e_log.size());
  if (!res.scaled.e_log.empty())
    std::printf("synth-cbf: final e=%.6g\n", res.scaled.e_log.back());
  std::printf(
      "synth-cbf: verify samples=%d violations=%d cbf_margin=%.3g "
      "input_margin=%.3g danger=%.3g\n",
      rep.n_checked, rep.n_violations, rep.worst_cbf_margin,
      rep.worst_input_margin, rep.worst_danger_value);
  if (res.scaled.certified && rep.n_violations > 0) {
    std::fprintf(stderr, "error: code=verification-failed violations=%d\n",
                 rep.n_violations);
    return 1;
  }
  if (!res.scaled.certified) {
    // uncertified barriers are still usable downstream as long as the zero
    // level set stays clear of the danger set
    if (rep.worst_danger_value > 1e-6) {
      std::fprintf(stderr, "error: code=danger-overlap value=%.3g\n",
                   rep.worst_danger_value);
      return 1;
    }
    std::printf("synth-cbf: status=uncertified (danger separation holds)\n");
  }
  save_barrier(res.raw, barrier_path(p), p.hash);
  std::printf("synth-cbf: wrote %s\n", barrier_path(p).c_str());
  return 0;
}

int cmd_build_lib(const Pipeline& p, const std::string& set, bool serial) {
  const HorizonTag tag = parse_set(set);
  const auto bar = load_checked_barrier(p);
  const TrajContext ctx = make_traj_context(p, bar);
  Vec lo, hi;
  default_feature_ranges(tag, lo, hi);
  const auto counts = set_counts(p, tag);
  const auto plan = grid_plan(lo, hi, counts);
  TrajOptSpec base;
  base.u_max = p.cfg.get_double("safe.u_max", 0.2);
  base.kappa = bar.kappa;
  LibraryFile lib = batch_generate(plan, tag, ctx, base, !serial);
  lib.header.counts = counts;
  lib.header.config_hash = p.hash;
  save_library(lib, lib_path(p, tag));
  std::printf("build-lib: set=%s grid=%zu feasible=%zu infeasible=%d -> %s\n",
              set.c_str(), plan.size(), lib.records.size(),
              lib.infeasible_count, lib_path(p, tag).c_str());
  return 0;
}

int cmd_train(const Pipeline& p, const std::string& set) {
  const HorizonTag tag = parse_set(set);
  need(lib_path(p, tag), "build-lib");
  const auto lib = load_library(lib_path(p, tag), p.hash);
  const auto res = train(lib, train_config(p, tag));
  save_mlp(res.model, model_path(p, tag));
  std::printf("train: set=%s records=%zu train_mse=%.6g test_mse=%.6g -> %s\n",
              set.c_str(), lib.records.size(), res.train_mse, res.test_mse,
              model_path(p, tag).c_str());
  return 0;
}

int cmd_simulate(const Pipeline& p, const std::string& scenario,
                 const std::string& controller) {
  const ChContext ctx = make_ch_context(p);
  const Scenario sc = resolve_scenario(scenario);
  const ControllerKind kind =
      controller == "lqr" ? ControllerKind::Lqr : ControllerKind::Learned;
  const auto tr = run_scenario(sc, kind, ctx, p.lqr);
  const std::string stem = p.art + "/" + sc.name + "_" + controller;
  write_trace_csv(tr, stem + "_trace.csv");
  const auto m = compute_metrics(tr, ctx);
  {
    std::ofstream os(stem + "_metrics.txt");
    os << metrics_summary(m);
  }
  std::printf("simulate: scenario=%s controller=%s rows=%zu\n%s",
              sc.name.c_str(), controller.c_str(), tr.rows.size(),
              metrics_summary(m).c_str());
  if (tr.aborted) {
    std::fprintf(stderr, "error: code=sim-aborted reason=%s\n",
                 tr.abort_reason.c_str());
    return 1;
  }
  std::printf("simulate: wrote %s_trace.csv\n", stem.c_str());
  return 0;
}

int cmd_report(const Pipeline& p, const std::vector<std::string>& names) {
  const ChContext ctx = make_ch_context(p);
  std::string out;
  out += "scenario          metric            learned     lqr\n";
  for (const auto& name : names) {
    const Scenario sc = resolve_scenario(name);
    const auto cmp = compare(sc, ctx, p.lqr);
    char buf[256];
    auto rowf = [&](const char* metric, double a, double b) {
      std::snprintf(buf, sizeof(buf), "%-17s %-17s %-11.4g %-11.4g\n",
                    name.c_str(), metric, a, b);
      out += buf;
    };
    rowf("min_b", cmp.learned.min_b, cmp.baseline.min_b);
    rowf("max_abs_y", cmp.learned.max_abs_y, cmp.baseline.max_abs_y);
    rowf("interventions", cmp.learned.interventions,
         cmp.baseline.interventions);
    rowf("du_energy", cmp.learned.du_energy, cmp.baseline.du_energy);
    rowf("replans", cmp.learned.replans, cmp.baseline.replans);
  }
  std::ofstream os(p.art + "/report.txt");
  os << out;
  std::fputs(out.c_str(), stdout);
  std::printf("report: wrote %s/report.txt\n", p.art.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"truck lane-keeping CBF pipeline"};
  app.require_subcommand(1);
  std::string config_path = "config/default.cfg";
  std::string artifacts;
  app.add_option("--config", config_path, "pipeline config file");
  app.add_option("--artifacts", artifacts,
                 "artifact cache dir (default $LK_ARTIFACT_DIR or artifacts)");

  auto* synth = app.add_subcommand("synth-cbf", "synthesize the barrier");
  std::string set = "s2";
  bool serial = false;
  auto* build = app.add_subcommand("build-lib", "generate a trajectory library");
  build->add_option("--set", set, "training set, s1 or s2");
  build->add_flag("--serial", serial, "serial reference path");
  auto* train_cmd = app.add_subcommand("train", "train a generator model");
  std::string train_set = "s2";
  train_cmd->add_option("--set", train_set, "training set, s1 or s2");
  auto* sim = app.add_subcommand("simulate", "closed-loop run");
  std::string scenario = "nominal", controller = "learned";
  sim->add_option("--scenario", scenario, "scenario name or file");
  sim->add_option("--controller", controller, "learned or lqr")
      ->check(CLI::IsMember({"learned", "lqr"}));
  auto* report = app.add_subcommand("report", "learned-vs-LQR comparison");
  std::vector<std::string> names = {"straight", "nominal", "offset"};
  report->add_option("--scenarios", names, "scenario names");

  CLI11_PARSE(app, argc, argv);
  try {
    const Pipeline p = load_pipeline(config_path, artifacts);
    if (synth->parsed()) return cmd_synth(p);
    if (build->parsed()) return cmd_build_lib(p, set, serial);
    if (train_cmd->parsed()) return cmd_train(p, train_set);
    if (sim->parsed()) return cmd_simulate(p, scenario, controller);
    if (report->parsed()) return cmd_report(p, names);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
