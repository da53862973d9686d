#pragma once

#include <functional>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "uapbev/common.hpp"
#include "uapbev/occupancy.hpp"
#include "uapbev/projection.hpp"
#include "uapbev/sampling_optimizer.hpp"
#include "uapbev/uncertainty_mmd.hpp"

namespace uapbev {

struct PerceptionEmulation {
  int horizon = 4;            // F; frames k = 0..F are predicted
  double frame_period = 0.5;  // seconds
  double jitter = 0.1;        // footprint translation std at frame 0 (m), grows as (1 + f)
  double dropout = 0.05;      // footprint drop probability per frame index f
  int dilate = 0;             // cells
  int erode = 0;              // cells
  int grid_cells = 200;
  double resolution = 0.2;
  double origin_x = -10.0;  // ego-centric grid origin (m)
  double origin_y = -20.0;

  void validate() const {
    if (horizon < 1) throw ConfigError("perception: horizon must be >= 1");
    if (!(frame_period > 0.0)) throw ConfigError("perception: frame_period must be positive");
    if (!(jitter >= 0.0)) throw ConfigError("perception: jitter must be non-negative");
    if (!(dropout >= 0.0 && dropout * horizon <= 1.0)) {
      throw ConfigError("perception: dropout * horizon must lie in [0, 1]");
    }
    if (dilate < 0 || erode < 0) throw ConfigError("perception: dilate/erode must be non-negative");
    if (grid_cells < 2 || !(resolution > 0.0)) throw ConfigError("perception: bad grid geometry");
  }
};

struct SimSettings {
  double dt = 0.1;
  double replan_period = 0.5;
  double timeout = 60.0;
  double stuck_time = 10.0;
  double stuck_speed = 0.1;
  double ego_radius = 1.0;

  void validate() const {
    if (!(dt > 0.0)) throw ConfigError("sim: dt must be positive");
    if (!(replan_period >= dt)) throw ConfigError("sim: replan_period must be >= dt");
    if (!(timeout > 0.0)) throw ConfigError("sim: timeout must be positive");
    if (!(ego_radius > 0.0)) throw ConfigError("sim: ego_radius must be positive");
  }
};

struct PlannerConfig {
  int segments = 6;
  int steps_per_segment = 5;
  double dt = 0.1;
  PlannerLimits limits;
  OptimizerConfig optimizer;
  KernelConfig kernel;
  AnalyticWeights weights;
  double cruise_speed = 8.0;
  double sigma_lateral = 1.0;  // initial sampling std of the lateral target (m)
  double sigma_speed = 2.0;    // initial sampling std of the speed setpoint (m/s)
  bool warm_start = true;
  bool longitudinal_barrier = true;
  double lead_gate = 30.0;  // barrier applies to a lead first seen within this gap (m)
  std::string error_model = "synthetic";  // "synthetic", "zero" or a model file path
  std::string error_residuals;            // residual bank path (empirical mode)
  PerceptionEmulation perception;
  SimSettings sim;

  void validate() const {
    if (segments < 1 || steps_per_segment < 1 || !(dt > 0.0)) {
      throw ConfigError("planner: segments, steps_per_segment and dt must be positive");
    }
    limits.validate();
    optimizer.validate();
    if (!(kernel.gamma > 0.0) || kernel.sample_count < 1) {
      throw ConfigError("kernel: gamma must be positive and samples >= 1");
    }
    if (!(lead_gate > 0.0)) throw ConfigError("planner: lead_gate must be positive");
    if (!(sigma_lateral >= 0.0 && sigma_speed >= 0.0)) {
      throw ConfigError("sampling: initial std devs must be non-negative");
    }
    perception.validate();
    sim.validate();
  }

  ErrorModel load_error_model() const {
    const int frames = perception.horizon + 1;
    ErrorModel m;
    if (error_model == "synthetic") {
      m = ErrorModel::synthetic_default(frames);
    } else if (error_model == "zero") {
      m = ErrorModel::zero(frames);
    } else {
      m = uapbev::load_error_model(error_model, error_residuals);
    }
    if (m.frame_count() < frames) {
      throw ConfigError("error model covers " + std::to_string(m.frame_count()) +
                        " frames, perception horizon needs " + std::to_string(frames));
    }
    return m;
  }
};

namespace detail {

inline double to_double(const std::string& key, const std::string& v) {
  return parse_double(v, "value of " + key);
}

inline int to_int(const std::string& key, const std::string& v) {
  const double d = to_double(key, v);
  if (d != static_cast<double>(static_cast<int>(d))) {
    throw ConfigError("value of " + key + " must be an integer: '" + v + "'");
  }
  return static_cast<int>(d);
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "off" || v == "no") return false;
  throw ConfigError("value of " + key + " must be a boolean: '" + v + "'");
}

struct ConfigField {
  std::function<void(PlannerConfig&, const std::string&)> set;
  std::function<std::string(const PlannerConfig&)> get;
};

inline std::string fmt_bool(bool b) { return b ? "true" : "false"; }

#define UAPBEV_DOUBLE(name, member)                                                     \
  {name,                                                                                \
   {[](PlannerConfig& c, const std::string& v) { c.member = to_double(name, v); },     \
    [](const PlannerConfig& c) { return format_double(c.member); }}}
#define UAPBEV_INT(name, member)                                                        \
  {name,                                                                                \
   {[](PlannerConfig& c, const std::string& v) { c.member = to_int(name, v); },        \
    [](const PlannerConfig& c) { return std::to_string(c.member); }}}
#define UAPBEV_BOOL(name, member)                                                       \
  {name,                                                                                \
   {[](PlannerConfig& c, const std::string& v) { c.member = to_bool(name, v); },       \
    [](const PlannerConfig& c) { return fmt_bool(c.member); }}}
#define UAPBEV_STRING(name, member)                                                     \
  {name,                                                                                \
   {[](PlannerConfig& c, const std::string& v) { c.member = v; },                      \
    [](const PlannerConfig& c) { return c.member; }}}

inline const std::map<std::string, ConfigField>& config_fields() {
  static const std::map<std::string, ConfigField> fields = {
      UAPBEV_INT("planner.segments", segments),
      UAPBEV_INT("planner.steps_per_segment", steps_per_segment),
      UAPBEV_DOUBLE("planner.dt", dt),
      UAPBEV_DOUBLE("planner.cruise_speed", cruise_speed),
      UAPBEV_DOUBLE("planner.sigma_lateral", sigma_lateral),
      UAPBEV_DOUBLE("planner.sigma_speed", sigma_speed),
      UAPBEV_BOOL("planner.warm_start", warm_start),
      UAPBEV_BOOL("planner.longitudinal_barrier", longitudinal_barrier),
      UAPBEV_DOUBLE("planner.lead_gate", lead_gate),
      UAPBEV_DOUBLE("limits.v_min", limits.v_min),
      UAPBEV_DOUBLE("limits.v_max", limits.v_max),
      UAPBEV_DOUBLE("limits.a_max", limits.a_max),
      UAPBEV_DOUBLE("limits.y_lb", limits.y_lb),
      UAPBEV_DOUBLE("limits.y_ub", limits.y_ub),
      UAPBEV_DOUBLE("limits.gamma_lane", limits.gamma_lane),
      UAPBEV_DOUBLE("limits.gamma_long", limits.gamma_long),
      UAPBEV_DOUBLE("limits.s_min", limits.s_min),
      UAPBEV_DOUBLE("limits.r_safe", limits.r_safe),
      UAPBEV_DOUBLE("limits.rho", limits.rho),
      UAPBEV_INT("optimizer.samples", optimizer.n_bar_s),
      UAPBEV_INT("optimizer.constraint_elites", optimizer.n_s),
      UAPBEV_INT("optimizer.elites", optimizer.n_e),
      UAPBEV_INT("optimizer.iters", optimizer.iters),
      UAPBEV_DOUBLE("optimizer.beta", optimizer.beta),
      UAPBEV_DOUBLE("optimizer.eta", optimizer.eta),
      UAPBEV_DOUBLE("optimizer.cov_floor", optimizer.cov_floor),
      UAPBEV_BOOL("optimizer.all_time_best", optimizer.return_all_time_best),
      UAPBEV_DOUBLE("optimizer.bev_weight", optimizer.bev_weight),
      UAPBEV_BOOL("optimizer.correlated_noise", optimizer.correlated_noise),
      UAPBEV_BOOL("optimizer.clamp_behaviors", optimizer.clamp_behaviors),
      UAPBEV_INT("optimizer.projection_iters", optimizer.projection.max_iters),
      UAPBEV_DOUBLE("optimizer.projection_tol", optimizer.projection.tol),
      UAPBEV_DOUBLE("kernel.gamma", kernel.gamma),
      UAPBEV_INT("kernel.samples", kernel.sample_count),
      UAPBEV_DOUBLE("cost.smooth", weights.smooth),
      UAPBEV_DOUBLE("cost.velocity", weights.velocity),
      UAPBEV_DOUBLE("cost.lateral", weights.lateral),
      UAPBEV_STRING("noise.model", error_model),
      UAPBEV_STRING("noise.residuals", error_residuals),
      UAPBEV_INT("perception.horizon", perception.horizon),
      UAPBEV_DOUBLE("perception.frame_period", perception.frame_period),
      UAPBEV_DOUBLE("perception.jitter", perception.jitter),
      UAPBEV_DOUBLE("perception.dropout", perception.dropout),
      UAPBEV_INT("perception.dilate", perception.dilate),
      UAPBEV_INT("perception.erode", perception.erode),
      UAPBEV_INT("perception.grid_cells", perception.grid_cells),
      UAPBEV_DOUBLE("perception.resolution", perception.resolution),
      UAPBEV_DOUBLE("perception.origin_x", perception.origin_x),
      UAPBEV_DOUBLE("perception.origin_y", perception.origin_y),
      UAPBEV_DOUBLE("sim.dt", sim.dt),
      UAPBEV_DOUBLE("sim.replan_period", sim.replan_period),
      UAPBEV_DOUBLE("sim.timeout", sim.timeout),
      UAPBEV_DOUBLE("sim.stuck_time", sim.stuck_time),
      UAPBEV_DOUBLE("sim.stuck_speed", sim.stuck_speed),
      UAPBEV_DOUBLE("sim.ego_radius", sim.ego_radius),
  };
  return fields;
}

#undef UAPBEV_DOUBLE
#undef UAPBEV_INT
#undef UAPBEV_BOOL
#undef UAPBEV_STRING

}  // namespace detail

inline void set_config_value(PlannerConfig& cfg, const std::string& key, const std::string& value) {
  const auto& fields = detail::config_fields();
  const auto it = fields.find(key);
  if (it == fields.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second.set(cfg, value);
}

// "KEY=VALUE" form used on the command line.
inline void apply_override(PlannerConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("config override must look like KEY=VALUE: '" + assignment + "'");
  }
  set_config_value(cfg, assignment.substr(0, eq), assignment.substr(eq + 1));
}

inline std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, f] : detail::config_fields()) keys.push_back(k);
  return keys;
}

// One "key=value" line per field, sorted by key.
inline void write_config(std::ostream& out, const PlannerConfig& cfg) {
  for (const auto& [k, f] : detail::config_fields()) out << k << '=' << f.get(cfg) << '\n';
}

inline std::string get_config_value(const PlannerConfig& cfg, const std::string& key) {
  const auto& fields = detail::config_fields();
  const auto it = fields.find(key);
  if (it == fields.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second.get(cfg);
}

}  // namespace uapbev
