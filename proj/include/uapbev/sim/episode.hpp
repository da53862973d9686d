#pragma once

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <tuple>
#include <string>
#include <vector>

#include <json.hpp>

#include "uapbev/common.hpp"
#include "uapbev/config.hpp"
#include "uapbev/frenet_seed.hpp"
#include "uapbev/occupancy.hpp"
#include "uapbev/projection.hpp"
#include "uapbev/sampling_optimizer.hpp"
#include "uapbev/sim/scenario.hpp"
#include "uapbev/sim/world.hpp"
#include "uapbev/trajectory_basis.hpp"
#include "uapbev/uncertainty_mmd.hpp"

namespace uapbev::sim {

enum class Variant {
  Uap,            // MMD over noisy distance samples, full optimizer
  Deterministic,  // MMD of the noise-free distance cost, full optimizer
  SinglePass,     // one sample-evaluate-pick pass with the MMD cost
};

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::Uap: return "uap";
    case Variant::Deterministic: return "deterministic";
    case Variant::SinglePass: return "single-pass";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  if (s == "uap") return Variant::Uap;
  if (s == "deterministic") return Variant::Deterministic;
  if (s == "single-pass") return Variant::SinglePass;
  throw ConfigError("unknown variant '" + s + "' (expected uap, deterministic or single-pass)");
}

// What one planning cycle chose.
struct PlanRecord {
  BehavioralInput p;
  double total = 0.0;
  double c_a = 0.0;
  double c_bev = 0.0;
  double residual = 0.0;
  bool converged = false;
  bool lead = false;
  // Distance queries at the planned position for t = f * frame_period on the
  // predicted and the ground-truth grid of frame f; unset when either query
  // left the grid or saw no obstacle.
  std::vector<std::optional<double>> d_pred;
  std::vector<std::optional<double>> d_gt;
  std::vector<IterationDiagnostics> iterations;
};

struct NeighborSnapshot {
  double s = 0.0, d = 0.0, v = 0.0;
};

struct TraceRecord {
  double time = 0.0;
  EgoState ego;
  std::vector<NeighborSnapshot> neighbors;
  bool collision = false;
  std::optional<PlanRecord> plan;
};

struct TraceHeader {
  std::string scenario;
  std::string variant;
  std::uint64_t seed = 0;
  std::string mode;
  double route_length = 0.0;
  double start_s = 0.0;
  double lane_width = 3.5;
};

struct Trace {
  TraceHeader header;
  std::vector<TraceRecord> records;
  std::string termination;  // completed | collision | timeout | stuck | planner_failure
  std::string failure;      // planner error message, if any
};

struct EpisodeMetrics {
  int collisions = 0;
  double distance = 0.0;  // m
  double collisions_per_km = 0.0;
  bool route_completed = false;
  double route_completion = 0.0;  // percent
  double duration = std::numeric_limits<double>::quiet_NaN();  // completed routes only
  double smoothness = 0.0;                                      // mean |jerk|, m/s^3
  double min_gap = std::numeric_limits<double>::quiet_NaN();    // no same-lane lead seen
  double mean_cost = std::numeric_limits<double>::quiet_NaN();
  int plans = 0;
  std::string termination;
};

// ---- metrics -------------------------------------------------------------

inline EpisodeMetrics compute_metrics(const Trace& trace) {
  require(!trace.records.empty(), "compute_metrics: trace is empty");
  const auto& recs = trace.records;
  const auto& h = trace.header;
  EpisodeMetrics m;
  m.termination = trace.termination;
  for (std::size_t i = 1; i < recs.size(); ++i) {
    m.distance += std::hypot(recs[i].ego.s - recs[i - 1].ego.s, recs[i].ego.d - recs[i - 1].ego.d);
  }
  for (const auto& r : recs) m.collisions += r.collision ? 1 : 0;
  const double km = std::max(m.distance, 1.0) / 1000.0;
  m.collisions_per_km = m.collisions / km;
  const double progress = recs.back().ego.s - h.start_s;
  m.route_completion = std::clamp(100.0 * progress / h.route_length, 0.0, 100.0);
  m.route_completed = trace.termination == "completed";
  if (m.route_completed) m.duration = recs.back().time - recs.front().time;

  double jerk_sum = 0.0;
  int jerk_count = 0;
  for (std::size_t i = 1; i < recs.size(); ++i) {
    const double dt = recs[i].time - recs[i - 1].time;
    if (!(dt > 0.0)) continue;
    jerk_sum += std::hypot(recs[i].ego.as - recs[i - 1].ego.as, recs[i].ego.ad - recs[i - 1].ego.ad) / dt;
    ++jerk_count;
  }
  m.smoothness = jerk_count > 0 ? jerk_sum / jerk_count : 0.0;

  for (const auto& r : recs) {
    for (const auto& nb : r.neighbors) {
      if (nb.s > r.ego.s && std::abs(nb.d - r.ego.d) < h.lane_width / 2.0) {
        const double gap = nb.s - r.ego.s;
        if (std::isnan(m.min_gap) || gap < m.min_gap) m.min_gap = gap;
      }
    }
  }
  double cost_sum = 0.0;
  for (const auto& r : recs) {
    if (r.plan) {
      cost_sum += r.plan->total;
      ++m.plans;
    }
  }
  if (m.plans > 0) m.mean_cost = cost_sum / m.plans;
  return m;
}

// ---- planner -------------------------------------------------------------

struct PlanOutcome {
  StateSequence trajectory;  // planner frame
  PlanRecord record;
};

class Planner {
 public:
  Planner(const PlannerConfig& cfg, Variant variant, ErrorModel model)
      : cfg_(cfg),
        variant_(variant),
        model_(std::move(model)),
        solver_(build_basis(cfg.segments, cfg.steps_per_segment, cfg.dt)) {
    initial_.mu = Vec2(0.0, cfg.cruise_speed);
    initial_.sigma = Vec2(cfg.sigma_lateral * cfg.sigma_lateral, cfg.sigma_speed * cfg.sigma_speed).asDiagonal();
    dist_ = initial_;
  }

  const BasisSet& basis() const { return solver_.basis(); }

  PlanOutcome plan(const Scenario& sc, const WorldState& w, const BevPrediction& bev, std::uint64_t seed) {
    EgoFrenetState ego;
    ego.s = 0.0;
    ego.d = w.ego.d;
    ego.vs = w.ego.vs;
    ego.vd = w.ego.vd;
    ego.as = w.ego.as;
    ego.ad = w.ego.ad;

    PlannerLimits limits = cfg_.limits;
    std::tie(limits.y_lb, limits.y_ub) = sc.lane_bounds(cfg_);
    std::optional<LeadVehicleTrack> lead;
    if (sc.mode == DrivingMode::Inlane && cfg_.longitudinal_barrier && bev.lead &&
        bev.lead->x_o[0] <= cfg_.lead_gate) {
      lead = bev.lead;
    }

    SceneContext ctx = SceneContext::make(solver_, ego, limits, lead,
                                          DistanceFieldSequence::build(bev.predicted), model_);
    ctx.kernel = cfg_.kernel;
    ctx.weights = cfg_.weights;
    ctx.reference = {0.0, cfg_.cruise_speed};
    ctx.frame = {&sc.centerline, w.ego.s, world_position(sc.centerline, w.ego.s, w.ego.d)};
    ctx.cost_mode = variant_ == Variant::Deterministic ? CollisionCostMode::Deterministic
                                                       : CollisionCostMode::Uncertain;

    OptimizerConfig opt = cfg_.optimizer;
    if (variant_ == Variant::SinglePass) opt.iters = 1;

    SamplingDistribution start = initial_;
    if (cfg_.warm_start) start.mu = dist_.mu;
    const OptimizeResult res = optimize(ctx, opt, start, seed);
    dist_ = res.final_distribution;

    PlanOutcome out;
    out.trajectory = eval_trajectory(solver_.basis(), res.best.xi_projected);
    auto& r = out.record;
    r.p = res.best.p;
    r.total = res.best.total;
    r.c_a = res.best.c_a;
    r.c_bev = res.best.c_bev;
    r.residual = res.best.residual;
    r.converged = res.best.converged;
    r.lead = lead.has_value();
    r.iterations = res.diagnostics;

    const auto fields_gt = DistanceFieldSequence::build(bev.ground_truth);
    const int frames = static_cast<int>(bev.predicted.frames.size());
    r.d_pred.assign(frames, std::nullopt);
    r.d_gt.assign(frames, std::nullopt);
    for (int f = 0; f < frames; ++f) {
      const long k = std::lround(f * bev.predicted.frame_period / solver_.basis().dt);
      if (k >= out.trajectory.size()) break;
      const Vec2 p = ctx.frame.world_point(out.trajectory.x[k], out.trajectory.y[k]) - ctx.frame.ego_world;
      const auto qp = query_distance(ctx.fields.fields[f], p);
      const auto qg = query_distance(fields_gt.fields[f], p);
      if (qp.clamped || qg.clamped) continue;
      if (ctx.fields.fields[f].empty_source || fields_gt.fields[f].empty_source) continue;
      r.d_pred[f] = qp.distance;
      r.d_gt[f] = qg.distance;
    }
    return out;
  }

 private:
  PlannerConfig cfg_;
  Variant variant_;
  ErrorModel model_;
  SeedSolver solver_;
  SamplingDistribution initial_;
  SamplingDistribution dist_;
};

// ---- episode -------------------------------------------------------------

inline std::uint64_t episode_seed(const Scenario& sc, std::uint64_t seed) { return mix_seed(sc.seed, seed); }

inline TraceRecord snapshot(const WorldState& w) {
  TraceRecord r;
  r.time = w.time;
  r.ego = w.ego;
  for (const auto& nb : w.neighbors) r.neighbors.push_back({nb.s, nb.d, nb.v});
  r.collision = w.collision;
  return r;
}

struct EpisodeResult {
  EpisodeMetrics metrics;
  Trace trace;
};

inline EpisodeResult run_episode(const Scenario& sc, const PlannerConfig& cfg, Variant variant,
                                 std::uint64_t seed) {
  cfg.validate();
  const std::uint64_t eseed = episode_seed(sc, seed);
  WorldState w = init_world(sc, eseed);
  Rng perception_rng = make_rng(eseed, 0x9e7c3b1dULL);
  Planner planner(cfg, variant, cfg.load_error_model());
  const int n = planner.basis().n;

  EpisodeResult out;
  Trace& trace = out.trace;
  trace.header = {sc.name, to_string(variant), seed, to_string(sc.mode), sc.route_length, sc.ego.s, sc.lane_width};

  const int steps_per_plan = std::max(1, static_cast<int>(std::lround(cfg.sim.replan_period / cfg.sim.dt)));
  const long max_steps = std::lround(cfg.sim.timeout / cfg.sim.dt);
  double slow_time = 0.0;
  int cycle = 0;
  TraceRecord rec = snapshot(w);
  for (long step = 0;; ++step) {
    if (step % steps_per_plan == 0) {
      try {
        const BevPrediction bev = emulate_bev_prediction(sc, w, cfg.perception, cfg.sim.dt, perception_rng, n,
                                                         planner.basis().dt, 0.0);
        PlanOutcome po = planner.plan(sc, w, bev, mix_seed(eseed, 0x1000ULL + static_cast<std::uint64_t>(cycle)));
        w.plan = {std::move(po.trajectory), w.ego.s, w.time, planner.basis().dt};
        rec.plan = std::move(po.record);
        ++cycle;
      } catch (const Error& e) {
        trace.records.push_back(std::move(rec));
        trace.termination = "planner_failure";
        trace.failure = e.what();
        break;
      }
    }
    trace.records.push_back(std::move(rec));
    if (w.collision) {
      trace.termination = "collision";
      break;
    }
    if (w.ego.s - sc.ego.s >= sc.route_length) {
      trace.termination = "completed";
      break;
    }
    if (step >= max_steps) {
      trace.termination = "timeout";
      break;
    }
    slow_time = w.ego.speed() < cfg.sim.stuck_speed ? slow_time + cfg.sim.dt : 0.0;
    if (slow_time > cfg.sim.stuck_time + kTimeEps) {
      trace.termination = "stuck";
      break;
    }
    w = step_world(sc, std::move(w), cfg.sim.dt, cfg.sim.ego_radius);
    rec = snapshot(w);
  }
  out.metrics = compute_metrics(trace);
  return out;
}

// ---- trace I/O -----------------------------------------------------------

namespace detail {

inline nlohmann::json opt_array(const std::vector<std::optional<double>>& v) {
  auto a = nlohmann::json::array();
  for (const auto& x : v) a.push_back(x ? nlohmann::json(*x) : nlohmann::json(nullptr));
  return a;
}

inline std::vector<std::optional<double>> opt_vector(const nlohmann::json& a) {
  std::vector<std::optional<double>> v;
  for (const auto& x : a) v.push_back(x.is_null() ? std::nullopt : std::optional<double>(x.get<double>()));
  return v;
}

}  // namespace detail

inline nlohmann::json diagnostics_json(const IterationDiagnostics& d) {
  return {{"iteration", d.iteration},
          {"best_total", d.best_total},
          {"mean_total", d.mean_total},
          {"covariance_trace", d.covariance_trace},
          {"residual_min", d.residual_min},
          {"residual_median", d.residual_median},
          {"residual_max", d.residual_max},
          {"converged", d.converged_count}};
}

inline void write_trace(std::ostream& out, const Trace& trace) {
  using nlohmann::json;
  const auto& h = trace.header;
  out << json{{"type", "header"},  {"scenario", h.scenario},         {"variant", h.variant},
              {"seed", h.seed},    {"mode", h.mode},                 {"route_length", h.route_length},
              {"start_s", h.start_s}, {"lane_width", h.lane_width}}
             .dump()
      << '\n';
  for (const auto& r : trace.records) {
    json j{{"type", "step"},
           {"t", r.time},
           {"ego", {{"s", r.ego.s}, {"d", r.ego.d}, {"vs", r.ego.vs}, {"vd", r.ego.vd}, {"as", r.ego.as}, {"ad", r.ego.ad}}},
           {"collision", r.collision}};
    auto nbs = json::array();
    for (const auto& nb : r.neighbors) nbs.push_back({nb.s, nb.d, nb.v});
    j["neighbors"] = std::move(nbs);
    if (r.plan) {
      const auto& p = *r.plan;
      auto iters = json::array();
      for (const auto& d : p.iterations) iters.push_back(diagnostics_json(d));
      j["plan"] = {{"lateral_target", p.p.lateral_offset_target},
                   {"velocity_setpoint", p.p.velocity_setpoint},
                   {"total", p.total},
                   {"c_a", p.c_a},
                   {"c_bev", p.c_bev},
                   {"residual", p.residual},
                   {"converged", p.converged},
                   {"lead", p.lead},
                   {"d_pred", detail::opt_array(p.d_pred)},
                   {"d_gt", detail::opt_array(p.d_gt)},
                   {"iterations", std::move(iters)}};
    }
    out << j.dump() << '\n';
  }
  out << json{{"type", "end"}, {"termination", trace.termination}, {"failure", trace.failure}}.dump() << '\n';
}

class TraceSchemaError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

inline Trace read_trace(std::istream& in, const std::string& source = "<trace>") {
  using nlohmann::json;
  Trace trace;
  std::string line;
  int line_no = 0;
  bool have_header = false;
  auto fail = [&](const std::string& msg) {
    throw TraceSchemaError(source + ":" + std::to_string(line_no) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
      const std::string type = j.at("type").get<std::string>();
      if (type == "header") {
        auto& h = trace.header;
        h.scenario = j.at("scenario").get<std::string>();
        h.variant = j.at("variant").get<std::string>();
        h.seed = j.at("seed").get<std::uint64_t>();
        h.mode = j.at("mode").get<std::string>();
        h.route_length = j.at("route_length").get<double>();
        h.start_s = j.at("start_s").get<double>();
        h.lane_width = j.at("lane_width").get<double>();
        have_header = true;
      } else if (type == "step") {
        TraceRecord r;
        r.time = j.at("t").get<double>();
        const auto& e = j.at("ego");
        r.ego = {e.at("s").get<double>(),  e.at("d").get<double>(),  e.at("vs").get<double>(),
                 e.at("vd").get<double>(), e.at("as").get<double>(), e.at("ad").get<double>()};
        r.collision = j.at("collision").get<bool>();
        for (const auto& nb : j.at("neighbors")) {
          r.neighbors.push_back({nb.at(0).get<double>(), nb.at(1).get<double>(), nb.at(2).get<double>()});
        }
        if (j.contains("plan")) {
          const auto& p = j.at("plan");
          if (!p.contains("d_pred")) fail("plan record lacks d_pred");
          if (!p.contains("d_gt")) fail("plan record lacks d_gt");
          PlanRecord pr;
          pr.p = {p.at("lateral_target").get<double>(), p.at("velocity_setpoint").get<double>()};
          pr.total = p.at("total").get<double>();
          pr.c_a = p.at("c_a").get<double>();
          pr.c_bev = p.at("c_bev").get<double>();
          pr.residual = p.at("residual").get<double>();
          pr.converged = p.at("converged").get<bool>();
          pr.lead = p.at("lead").get<bool>();
          pr.d_pred = detail::opt_vector(p.at("d_pred"));
          pr.d_gt = detail::opt_vector(p.at("d_gt"));
          if (pr.d_pred.size() != pr.d_gt.size()) fail("d_pred and d_gt lengths differ");
          for (const auto& d : p.at("iterations")) {
            IterationDiagnostics it;
            it.iteration = d.at("iteration").get<int>();
            it.best_total = d.at("best_total").get<double>();
            it.mean_total = d.at("mean_total").get<double>();
            it.covariance_trace = d.at("covariance_trace").get<double>();
            it.residual_min = d.at("residual_min").get<double>();
            it.residual_median = d.at("residual_median").get<double>();
            it.residual_max = d.at("residual_max").get<double>();
            it.converged_count = d.at("converged").get<int>();
            pr.iterations.push_back(it);
          }
          r.plan = std::move(pr);
        }
        trace.records.push_back(std::move(r));
      } else if (type == "end") {
        trace.termination = j.at("termination").get<std::string>();
        trace.failure = j.at("failure").get<std::string>();
      } else {
        fail("unknown record type '" + type + "'");
      }
    } catch (const json::exception& e) {
      fail(std::string("malformed record: ") + e.what());
    }
  }
  if (!have_header) throw TraceSchemaError(source + ": missing header record");
  return trace;
}

// (k, d_pred, d_gt) triples from every plan record, k being the frame index.
inline std::vector<DistanceObservation> trace_observations(const Trace& trace) {
  std::vector<DistanceObservation> obs;
  for (const auto& r : trace.records) {
    if (!r.plan) continue;
    for (std::size_t f = 0; f < r.plan->d_pred.size(); ++f) {
      if (r.plan->d_pred[f] && r.plan->d_gt[f]) {
        obs.push_back({static_cast<int>(f), *r.plan->d_pred[f], *r.plan->d_gt[f]});
      }
    }
  }
  return obs;
}

}  // namespace uapbev::sim
