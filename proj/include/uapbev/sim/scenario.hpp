#pragma once

#include <filesystem>
#include <functional>
#include <fstream>
#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "uapbev/centerline.hpp"
#include "uapbev/common.hpp"
#include "uapbev/config.hpp"

namespace uapbev::sim {

enum class DrivingMode { Inlane, Overtaking };

inline std::string to_string(DrivingMode m) { return m == DrivingMode::Inlane ? "inlane" : "overtaking"; }

// Script event, fired at the first world step whose start time is >= `time`.
struct ScriptEvent {
  enum class Kind { Speed, Lane };
  Kind kind = Kind::Speed;
  double time = 0.0;
  double target = 0.0;    // speed (m/s) or lateral offset (m)
  double rate = 1.0;      // |acceleration| for speed changes (m/s^2)
  double duration = 2.0;  // lane changes (s)
};

struct NeighborScript {
  std::string name;
  double s0 = 0.0;
  double d0 = 0.0;
  double v0 = 0.0;
  double radius = 1.0;
  double s_spread = 0.0;  // initial s drawn uniformly from s0 +- s_spread per episode seed
  std::vector<ScriptEvent> events;
};

struct EgoInit {
  double s = 0.0, d = 0.0, v = 0.0;
};

struct Scenario {
  std::string name = "scenario";
  DrivingMode mode = DrivingMode::Inlane;
  Centerline centerline = Centerline::straight(400.0);
  double lane_width = 3.5;
  std::optional<double> y_lb, y_ub;  // mode defaults apply when unset
  double route_length = 100.0;
  EgoInit ego;
  std::vector<NeighborScript> neighbors;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> config;  // scenario-level config overrides

  // Lateral bounds on the ego center for the planner.
  std::pair<double, double> lane_bounds(const PlannerConfig& cfg) const {
    double lb = cfg.limits.y_lb;
    double ub = cfg.limits.y_ub;
    if (mode == DrivingMode::Overtaking) ub = lane_width + cfg.limits.y_ub;
    if (y_lb) lb = *y_lb;
    if (y_ub) ub = *y_ub;
    return {lb, ub};
  }

  void validate(double ego_radius) const {
    if (!(route_length > 0.0)) throw ConfigError("scenario " + name + ": route_length must be positive");
    if (!(lane_width > 0.0)) throw ConfigError("scenario " + name + ": lane_width must be positive");
    if (ego.s + route_length > centerline.length() + 1e-9) {
      throw ConfigError("scenario " + name + ": route extends beyond the centerline");
    }
    for (const auto& nb : neighbors) {
      if (!(nb.radius > 0.0)) throw ConfigError("neighbor " + nb.name + ": radius must be positive");
      for (const auto& e : nb.events) {
        if (e.kind == ScriptEvent::Kind::Speed && !(e.rate > 0.0)) {
          throw ConfigError("neighbor " + nb.name + ": speed event rate must be positive");
        }
        if (e.kind == ScriptEvent::Kind::Lane && !(e.duration > 0.0)) {
          throw ConfigError("neighbor " + nb.name + ": lane event duration must be positive");
        }
      }
      const double ds = std::max(0.0, std::abs(nb.s0 - ego.s) - nb.s_spread);
      if (std::hypot(ds, nb.d0 - ego.d) < ego_radius + nb.radius) {
        throw ConfigError("neighbor " + nb.name + " may start overlapping the ego footprint");
      }
    }
  }
};

namespace detail {

inline std::vector<std::string> tokenize(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ls(line);
  std::string tok;
  while (ls >> tok) out.push_back(tok);
  return out;
}

// Reads "key value key value ..." pairs after `start`.
inline void for_pairs(const std::vector<std::string>& t, std::size_t start, const std::string& where,
                      const std::function<void(const std::string&, const std::string&)>& fn) {
  if ((t.size() - start) % 2 != 0) throw ConfigError(where + ": expected key/value pairs");
  for (std::size_t i = start; i + 1 < t.size(); i += 2) fn(t[i], t[i + 1]);
}

}  // namespace detail

// Scenario files are line oriented; '#' starts a comment.
//
//   name <id>
//   mode inlane|overtaking
//   route_length <m>
//   centerline straight <length_m>      or   centerline file <path>
//   lane_width <m>
//   lane_bounds <y_lb> <y_ub>           (optional; overrides mode defaults)
//   ego s <m> d <m> v <m/s>
//   seed <int>
//   config <key> <value>                (planner config override)
//   neighbor <id>
//     start s <m> d <m> v <m/s>
//     radius <m>
//     spread <m>
//     at <t> speed <m/s> rate <m/s^2>
//     at <t> lane <d> duration <s>
//   end
inline Scenario parse_scenario(std::istream& in, const std::string& source = "<scenario>",
                               const std::filesystem::path& base_dir = {}) {
  Scenario sc;
  NeighborScript* current = nullptr;
  std::string line;
  int line_no = 0;
  bool have_centerline = false;
  double centerline_length = 0.0;
  auto where = [&] { return source + ":" + std::to_string(line_no); };
  auto num = [&](const std::string& tok, const std::string& what) {
    return parse_double(tok, what + " at " + where());
  };
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto t = detail::tokenize(line);
    if (t.empty()) continue;
    const std::string& key = t[0];
    if (current != nullptr) {
      if (key == "end") {
        current = nullptr;
      } else if (key == "start") {
        detail::for_pairs(t, 1, where(), [&](const std::string& k, const std::string& v) {
          if (k == "s") current->s0 = num(v, "neighbor s");
          else if (k == "d") current->d0 = num(v, "neighbor d");
          else if (k == "v") current->v0 = num(v, "neighbor v");
          else throw ConfigError(where() + ": unknown neighbor start field '" + k + "'");
        });
      } else if (key == "radius" && t.size() == 2) {
        current->radius = num(t[1], "radius");
      } else if (key == "spread" && t.size() == 2) {
        current->s_spread = num(t[1], "spread");
      } else if (key == "at" && t.size() >= 4) {
        ScriptEvent e;
        e.time = num(t[1], "event time");
        if (t[2] == "speed") {
          e.kind = ScriptEvent::Kind::Speed;
          e.target = num(t[3], "event speed");
          detail::for_pairs(t, 4, where(), [&](const std::string& k, const std::string& v) {
            if (k == "rate") e.rate = num(v, "event rate");
            else throw ConfigError(where() + ": unknown speed event field '" + k + "'");
          });
        } else if (t[2] == "lane") {
          e.kind = ScriptEvent::Kind::Lane;
          e.target = num(t[3], "event lane offset");
          detail::for_pairs(t, 4, where(), [&](const std::string& k, const std::string& v) {
            if (k == "duration") e.duration = num(v, "event duration");
            else throw ConfigError(where() + ": unknown lane event field '" + k + "'");
          });
        } else {
          throw ConfigError(where() + ": unknown event kind '" + t[2] + "'");
        }
        current->events.push_back(e);
      } else {
        throw ConfigError(where() + ": unexpected '" + key + "' inside neighbor block");
      }
      continue;
    }
    if (key == "name" && t.size() == 2) {
      sc.name = t[1];
    } else if (key == "mode" && t.size() == 2) {
      if (t[1] == "inlane") sc.mode = DrivingMode::Inlane;
      else if (t[1] == "overtaking") sc.mode = DrivingMode::Overtaking;
      else throw ConfigError(where() + ": mode must be inlane or overtaking");
    } else if (key == "route_length" && t.size() == 2) {
      sc.route_length = num(t[1], "route_length");
    } else if (key == "centerline" && t.size() == 3 && t[1] == "straight") {
      centerline_length = num(t[2], "centerline length");
      have_centerline = true;
    } else if (key == "centerline" && t.size() == 3 && t[1] == "file") {
      const auto path = base_dir / t[2];
      sc.centerline = Centerline::load(path.string(), sc.lane_width / 2.0);
      have_centerline = false;
      centerline_length = -1.0;
    } else if (key == "lane_width" && t.size() == 2) {
      sc.lane_width = num(t[1], "lane_width");
    } else if (key == "lane_bounds" && t.size() == 3) {
      sc.y_lb = num(t[1], "lane_bounds lower");
      sc.y_ub = num(t[2], "lane_bounds upper");
    } else if (key == "ego") {
      detail::for_pairs(t, 1, where(), [&](const std::string& k, const std::string& v) {
        if (k == "s") sc.ego.s = num(v, "ego s");
        else if (k == "d") sc.ego.d = num(v, "ego d");
        else if (k == "v") sc.ego.v = num(v, "ego v");
        else throw ConfigError(where() + ": unknown ego field '" + k + "'");
      });
    } else if (key == "seed" && t.size() == 2) {
      sc.seed = static_cast<std::uint64_t>(num(t[1], "seed"));
    } else if (key == "config" && t.size() == 3) {
      sc.config.emplace_back(t[1], t[2]);
    } else if (key == "neighbor" && t.size() == 2) {
      sc.neighbors.push_back({});
      current = &sc.neighbors.back();
      current->name = t[1];
    } else {
      throw ConfigError(where() + ": unrecognized line '" + line + "'");
    }
  }
  if (current != nullptr) throw ConfigError(source + ": neighbor block '" + current->name + "' lacks 'end'");
  if (have_centerline) sc.centerline = Centerline::straight(centerline_length, 1.0, sc.lane_width / 2.0);
  return sc;
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario file: " + path);
  return parse_scenario(in, path, std::filesystem::path(path).parent_path());
}

// Built-in defaults, then scenario-level overrides, then command-line overrides.
inline PlannerConfig effective_config(const PlannerConfig& base, const Scenario& sc,
                                      const std::vector<std::string>& overrides) {
  PlannerConfig cfg = base;
  for (const auto& [k, v] : sc.config) set_config_value(cfg, k, v);
  for (const auto& o : overrides) apply_override(cfg, o);
  cfg.validate();
  sc.validate(cfg.sim.ego_radius);
  return cfg;
}

}  // namespace uapbev::sim
