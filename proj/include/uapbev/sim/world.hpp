#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "uapbev/centerline.hpp"
#include "uapbev/common.hpp"
#include "uapbev/config.hpp"
#include "uapbev/occupancy.hpp"
#include "uapbev/projection.hpp"
#include "uapbev/sim/scenario.hpp"
#include "uapbev/trajectory_basis.hpp"

namespace uapbev::sim {

// Time tolerance for "first step with t >= trigger" comparisons.
inline constexpr double kTimeEps = 1e-9;

struct NeighborState {
  double s = 0.0, d = 0.0, v = 0.0;
  double radius = 1.0;
  double v_target = 0.0;
  double v_rate = 1.0;
  double lat_from = 0.0, lat_to = 0.0;
  double lat_start = 0.0, lat_duration = 0.0;  // lat_duration 0: no lateral motion
  std::vector<char> fired;
};

// Frenet ego state in absolute arc length.
struct EgoState {
  double s = 0.0, d = 0.0;
  double vs = 0.0, vd = 0.0;
  double as = 0.0, ad = 0.0;

  double speed() const { return std::hypot(vs, vd); }
};

// Plan being executed: planner-frame states (ego-relative s) at spacing dt,
// anchored at absolute arc length s0 and time t0.
struct ExecutedPlan {
  StateSequence states;
  double s0 = 0.0;
  double t0 = 0.0;
  double dt = 0.1;

  bool empty() const { return states.size() == 0; }
};

struct WorldState {
  double time = 0.0;
  EgoState ego;
  ExecutedPlan plan;
  std::vector<NeighborState> neighbors;
  bool collision = false;
  int collided_with = -1;
};

inline double smoothstep(double u) {
  u = std::clamp(u, 0.0, 1.0);
  return u * u * (3.0 - 2.0 * u);
}

inline NeighborState init_neighbor(const NeighborScript& script, double s0) {
  NeighborState nb;
  nb.s = s0;
  nb.d = script.d0;
  nb.v = script.v0;
  nb.radius = script.radius;
  nb.v_target = script.v0;
  nb.lat_from = nb.lat_to = script.d0;
  nb.fired.assign(script.events.size(), 0);
  return nb;
}

// Initial world. Neighbor starting positions jitter within their spread,
// drawn from the episode seed.
inline WorldState init_world(const Scenario& sc, std::uint64_t episode_seed) {
  WorldState w;
  w.ego.s = sc.ego.s;
  w.ego.d = sc.ego.d;
  w.ego.vs = sc.ego.v;
  Rng rng = make_rng(episode_seed, 0x5ce7a210ULL);
  for (const auto& script : sc.neighbors) {
    const double u = uniform01(rng);
    w.neighbors.push_back(init_neighbor(script, script.s0 + script.s_spread * (2.0 * u - 1.0)));
  }
  return w;
}

// Advances one neighbor from time t to t + dt.
inline void step_neighbor(NeighborState& nb, const NeighborScript& script, double t, double dt) {
  for (std::size_t e = 0; e < script.events.size(); ++e) {
    if (nb.fired[e] || script.events[e].time > t + kTimeEps) continue;
    nb.fired[e] = 1;
    const auto& ev = script.events[e];
    if (ev.kind == ScriptEvent::Kind::Speed) {
      nb.v_target = ev.target;
      nb.v_rate = ev.rate;
    } else {
      nb.lat_from = nb.d;
      nb.lat_to = ev.target;
      nb.lat_start = t;
      nb.lat_duration = ev.duration;
    }
  }
  const double v_old = nb.v;
  const double dv = std::clamp(nb.v_target - nb.v, -nb.v_rate * dt, nb.v_rate * dt);
  nb.v = std::max(0.0, nb.v + dv);
  nb.s += 0.5 * (v_old + nb.v) * dt;
  if (nb.lat_duration > 0.0) {
    nb.d = nb.lat_from + (nb.lat_to - nb.lat_from) * smoothstep((t + dt - nb.lat_start) / nb.lat_duration);
  }
}

// Planner-frame state k of the executed plan, in absolute Frenet terms.
// Steps past the plan's end continue at constant velocity.
inline EgoState plan_state(const ExecutedPlan& plan, double t) {
  const auto n = plan.states.size();
  const long k = std::lround((t - plan.t0) / plan.dt);
  const auto kc = static_cast<Eigen::Index>(std::clamp<long>(k, 0, n - 1));
  const auto& st = plan.states;
  EgoState e;
  e.s = plan.s0 + st.x[kc];
  e.d = st.y[kc];
  e.vs = st.vx[kc];
  e.vd = st.vy[kc];
  e.as = st.ax[kc];
  e.ad = st.ay[kc];
  if (k > static_cast<long>(n) - 1) {
    const double extra = (k - static_cast<long>(n - 1)) * plan.dt;
    e.s += e.vs * extra;
    e.d += e.vd * extra;
    e.as = e.ad = 0.0;
  }
  return e;
}

inline Vec2 world_position(const Centerline& line, double s, double d) {
  return line.to_cartesian_extended({s, d});
}

// Ground-truth disc overlap test.
inline std::optional<int> find_collision(const Scenario& sc, const WorldState& w, double ego_radius) {
  const Vec2 ego = world_position(sc.centerline, w.ego.s, w.ego.d);
  for (std::size_t i = 0; i < w.neighbors.size(); ++i) {
    const auto& nb = w.neighbors[i];
    const Vec2 p = world_position(sc.centerline, nb.s, nb.d);
    if ((p - ego).norm() < ego_radius + nb.radius) return static_cast<int>(i);
  }
  return std::nullopt;
}

// Neighbors follow their scripts; the ego follows its plan (perfect tracking).
inline WorldState step_world(const Scenario& sc, WorldState w, double dt, double ego_radius = 1.0) {
  require(dt > 0.0, "step_world: dt must be positive");
  for (std::size_t i = 0; i < w.neighbors.size(); ++i) {
    step_neighbor(w.neighbors[i], sc.neighbors[i], w.time, dt);
  }
  w.time += dt;
  if (!w.plan.empty()) w.ego = plan_state(w.plan, w.time);
  if (auto hit = find_collision(sc, w, ego_radius)) {
    w.collision = true;
    w.collided_with = *hit;
  }
  return w;
}

// Neighbor states `horizon` frames ahead, frame f at time + f * period,
// integrated with the world step dt.
inline std::vector<std::vector<NeighborState>> propagate_neighbors(const Scenario& sc, const WorldState& w,
                                                                   int horizon, double period, double dt) {
  std::vector<std::vector<NeighborState>> frames;
  frames.reserve(horizon + 1);
  std::vector<NeighborState> cur = w.neighbors;
  frames.push_back(cur);
  double t = w.time;
  const int sub = std::max(1, static_cast<int>(std::lround(period / dt)));
  const double h = period / sub;
  for (int f = 1; f <= horizon; ++f) {
    for (int i = 0; i < sub; ++i) {
      for (std::size_t j = 0; j < cur.size(); ++j) step_neighbor(cur[j], sc.neighbors[j], t, h);
      t += h;
    }
    frames.push_back(cur);
  }
  return frames;
}

// One neighbor footprint in one predicted frame, in the ego-centric frame.
struct Footprint {
  int neighbor = 0;
  Vec2 center = Vec2::Zero();      // ego-centric, after noise
  Vec2 true_center = Vec2::Zero();  // ego-centric, ground truth
  double radius = 1.0;
  bool dropped = false;
};

struct BevPrediction {
  GridSequence predicted;
  GridSequence ground_truth;
  std::vector<std::vector<Footprint>> footprints;  // per frame
  std::optional<LeadVehicleTrack> lead;
  int lead_index = -1;
};

inline OccupancyGrid make_grid(const PerceptionEmulation& emu) {
  return OccupancyGrid(emu.grid_cells, emu.grid_cells, emu.resolution, Vec2(emu.origin_x, emu.origin_y));
}

// Lead vehicle track on the planner grid t_k = k * dt from noisy footprint
// centroids: linear interpolation between visible frames, held constant
// before the first visible frame and extrapolated at the last observed
// velocity after the final one.
inline LeadVehicleTrack lead_track_from_frames(const std::vector<double>& frame_times,
                                               const std::vector<double>& frame_s, int n, double dt) {
  require(!frame_times.empty(), "lead track needs at least one visible frame");
  LeadVehicleTrack track;
  track.x_o.resize(n);
  const std::size_t m = frame_times.size();
  const double v_tail = m >= 2 ? (frame_s[m - 1] - frame_s[m - 2]) / (frame_times[m - 1] - frame_times[m - 2])
                               : 0.0;
  for (int k = 0; k < n; ++k) {
    const double t = k * dt;
    if (t <= frame_times.front()) {
      track.x_o[k] = frame_s.front();
    } else if (t >= frame_times.back()) {
      track.x_o[k] = frame_s.back() + std::max(0.0, v_tail) * (t - frame_times.back());
    } else {
      std::size_t j = 1;
      while (frame_times[j] < t) ++j;
      const double u = (t - frame_times[j - 1]) / (frame_times[j] - frame_times[j - 1]);
      track.x_o[k] = frame_s[j - 1] + u * (frame_s[j] - frame_s[j - 1]);
    }
  }
  return track;
}

// Ground-truth future frames rasterized into ego-centric grids, then
// corrupted per footprint: translation noise with std jitter * (1 + f) per
// axis, drop with probability dropout * f, radius change by (dilate - erode)
// cells. The lead track follows the same-lane leading neighbor's noisy
// centroid, expressed as ego-relative arc length.
inline BevPrediction emulate_bev_prediction(const Scenario& sc, const WorldState& w,
                                            const PerceptionEmulation& emu, double world_dt,
                                            Rng& rng, int planner_n = 0, double planner_dt = 0.1,
                                            double lane_center = 0.0) {
  const auto frames = propagate_neighbors(sc, w, emu.horizon, emu.frame_period, world_dt);
  const Vec2 ego_world = world_position(sc.centerline, w.ego.s, w.ego.d);
  const double radius_delta = (emu.dilate - emu.erode) * emu.resolution;

  BevPrediction out;
  out.predicted.frame_period = emu.frame_period;
  out.ground_truth.frame_period = emu.frame_period;
  const std::size_t count = w.neighbors.size();
  std::vector<std::vector<double>> lead_times(count), lead_s(count);
  std::vector<char> in_lane(count, 0);
  std::vector<double> first_gap(count, std::numeric_limits<double>::infinity());

  for (int f = 0; f <= emu.horizon; ++f) {
    OccupancyGrid pred = make_grid(emu);
    OccupancyGrid gt = make_grid(emu);
    std::vector<Footprint> fps;
    const double sigma = emu.jitter * (1.0 + f);
    const double p_drop = emu.dropout * f;
    for (std::size_t j = 0; j < count; ++j) {
      const auto& nb = frames[f][j];
      const Vec2 world = world_position(sc.centerline, nb.s, nb.d);
      Footprint fp;
      fp.neighbor = static_cast<int>(j);
      fp.true_center = world - ego_world;
      gt.rasterize_disc(fp.true_center, nb.radius);
      // Draw order is fixed so the stream does not depend on noise levels.
      const double zx = standard_normal(rng);
      const double zy = standard_normal(rng);
      const double u = uniform01(rng);
      fp.center = fp.true_center + sigma * Vec2(zx, zy);
      fp.radius = std::max(0.0, nb.radius + radius_delta);
      fp.dropped = u < p_drop;
      if (!fp.dropped && fp.radius > 0.0) pred.rasterize_disc(fp.center, fp.radius);
      fps.push_back(fp);

      if (!fp.dropped) {
        const Vec2 t = sc.centerline.tangent_at(std::clamp(nb.s, 0.0, sc.centerline.length()));
        const Vec2 nrm(-t.y(), t.x());
        const Vec2 noise = fp.center - fp.true_center;
        const double s_rel = nb.s + t.dot(noise) - w.ego.s;
        const double d_obs = nb.d + nrm.dot(noise);
        lead_times[j].push_back(f * emu.frame_period);
        lead_s[j].push_back(s_rel);
        if (std::abs(d_obs - lane_center) < sc.lane_width / 2.0 && s_rel > 0.0) {
          in_lane[j] = 1;
          first_gap[j] = std::min(first_gap[j], s_rel);
        }
      }
    }
    out.predicted.frames.push_back(std::move(pred));
    out.ground_truth.frames.push_back(std::move(gt));
    out.footprints.push_back(std::move(fps));
  }

  if (planner_n > 0) {
    int best = -1;
    for (std::size_t j = 0; j < count; ++j) {
      if (in_lane[j] && (best < 0 || first_gap[j] < first_gap[best])) best = static_cast<int>(j);
    }
    if (best >= 0) {
      out.lead_index = best;
      out.lead = lead_track_from_frames(lead_times[best], lead_s[best], planner_n, planner_dt);
    }
  }
  return out;
}

}  // namespace uapbev::sim
