#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "uapbev/centerline.hpp"
#include "uapbev/common.hpp"
#include "uapbev/frenet_seed.hpp"
#include "uapbev/occupancy.hpp"
#include "uapbev/projection.hpp"
#include "uapbev/uncertainty_mmd.hpp"

namespace uapbev {

enum class CollisionCostMode {
  Uncertain,      // MMD over noisy distance samples
  Deterministic,  // MMD of the single noise-free cost sample
};

struct OptimizerConfig {
  int n_bar_s = 100;  // behaviors drawn per iteration
  int n_s = 30;       // constraint-elite count
  int n_e = 10;       // elite count
  int iters = 8;      // outer iterations N
  double beta = 0.9;  // temperature
  double eta = 0.6;   // learning rate
  double cov_floor = 1e-4;
  bool return_all_time_best = false;
  double bev_weight = 1.0;
  bool correlated_noise = false;
  bool clamp_behaviors = true;  // clip sampled p into the lane / speed limits
  ProjectionSettings projection;

  void validate() const {
    if (!(n_e >= 1 && n_e <= n_s && n_s <= n_bar_s)) {
      throw ConfigError("optimizer: need 1 <= n_e <= n_s <= n_bar_s");
    }
    if (iters < 1) throw ConfigError("optimizer: iters must be >= 1");
    if (!(beta > 0.0)) throw ConfigError("optimizer: beta must be positive");
    if (!(eta > 0.0 && eta <= 1.0)) throw ConfigError("optimizer: eta must be in (0, 1]");
  }
};

// Maps planner-frame (ego-relative Frenet) positions into the ego-centric
// frame of the occupancy grids. Without a centerline the planner frame is
// used as is.
struct PlannerFrame {
  const Centerline* line = nullptr;
  double ego_s = 0.0;
  Vec2 ego_world = Vec2::Zero();

  Vec2 world_point(double s_rel, double d) const {
    if (line == nullptr) return {s_rel, d};
    return line->to_cartesian_extended({ego_s + s_rel, d});
  }

  void to_ego_centric(const Vec& s_rel, const Vec& d, Vec& ex, Vec& ey) const {
    ex.resize(s_rel.size());
    ey.resize(s_rel.size());
    const Vec2 origin = line == nullptr ? Vec2::Zero().eval() : ego_world;
    for (Eigen::Index k = 0; k < s_rel.size(); ++k) {
      const Vec2 p = world_point(s_rel[k], d[k]) - origin;
      ex[k] = p.x();
      ey[k] = p.y();
    }
  }
};

// Everything one planning cycle needs. The projection problem carries the
// shared (A, F, G, b_barrier) structure; per-candidate b(p_j) comes from the
// seed solver.
struct SceneContext {
  const SeedSolver* seeds = nullptr;
  EgoFrenetState ego;
  ProjectionProblem problem;
  std::optional<KktOperator> kkt;
  DistanceFieldSequence fields;
  ErrorModel error_model;
  KernelConfig kernel;
  AnalyticWeights weights;
  BehavioralInput reference;  // cruise behavior the analytic cost tracks
  PlannerFrame frame;
  CollisionCostMode cost_mode = CollisionCostMode::Uncertain;

  const BasisSet& basis() const { return seeds->basis(); }

  // Assembles problem + KKT factorization for the current ego state.
  static SceneContext make(const SeedSolver& solver, const EgoFrenetState& ego,
                           const PlannerLimits& limits, const std::optional<LeadVehicleTrack>& lead,
                           DistanceFieldSequence fields, ErrorModel model) {
    SceneContext ctx;
    ctx.seeds = &solver;
    ctx.ego = ego;
    ctx.problem = build_problem(solver.basis(), solver.conditions({ego.d, ego.vs}, ego), limits, lead);
    ctx.kkt.emplace(ctx.problem);
    ctx.fields = std::move(fields);
    ctx.error_model = std::move(model);
    return ctx;
  }
};

struct CandidateRecord {
  int index = 0;
  BehavioralInput p;
  Vec xi_seed;
  Vec xi_projected;
  bool converged = false;
  int projection_iters = 0;
  double residual = 0.0;
  bool evaluated = false;  // cost terms only exist for the constraint-elite set
  double c_a = std::numeric_limits<double>::quiet_NaN();
  double c_bev = std::numeric_limits<double>::quiet_NaN();
  double total = std::numeric_limits<double>::quiet_NaN();
};

struct CollisionCost {
  double value = 0.0;
  Vec distances;
};

inline CollisionCost collision_cost(const SceneContext& ctx, const StateSequence& traj,
                                    std::uint64_t stream_seed, bool correlated) {
  Vec ex, ey;
  ctx.frame.to_ego_centric(traj.x, traj.y, ex, ey);
  const double dt = ctx.basis().dt;
  auto td = trajectory_distances(ctx.fields, ex, ey, dt);
  CollisionCost out;
  const double r_safe = ctx.problem.limits.r_safe;
  if (ctx.cost_mode == CollisionCostMode::Deterministic) {
    const Mat row = td.d.transpose();
    const Vec f = collision_cost_samples(row, r_safe);
    out.value = mmd_cost(f, ctx.kernel);
  } else {
    const Mat noisy = sample_noisy_distances(td.d, ctx.error_model, ctx.kernel.sample_count,
                                             stream_seed, ctx.fields.mapping(dt), correlated);
    out.value = mmd_cost(collision_cost_samples(noisy, r_safe), ctx.kernel);
  }
  out.distances = std::move(td.d);
  return out;
}

// Indices of the `count` smallest keys; ties by ascending index.
inline std::vector<int> select_lowest(const std::vector<double>& keys, const std::vector<int>& pool,
                                      int count) {
  std::vector<int> idx = pool;
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    if (keys[a] != keys[b]) return keys[a] < keys[b];
    return a < b;
  });
  if (static_cast<int>(idx.size()) > count) idx.resize(count);
  return idx;
}

struct EliteSample {
  BehavioralInput p;
  double total = 0.0;
};

// Weighted mean/covariance step with s_j = exp(-total_j / beta). Weights are
// computed relative to the smallest total; the normalized ratio is unchanged
// by that shift.
inline SamplingDistribution update_distribution(const SamplingDistribution& dist,
                                                const std::vector<EliteSample>& elites, double beta,
                                                double eta, double cov_floor = 1e-4) {
  require(!elites.empty(), "update_distribution: elite set is empty");
  double min_total = std::numeric_limits<double>::infinity();
  for (const auto& e : elites) min_total = std::min(min_total, e.total);
  std::vector<double> w(elites.size());
  double wsum = 0.0;
  for (std::size_t j = 0; j < elites.size(); ++j) {
    w[j] = std::exp(-(elites[j].total - min_total) / beta);
    wsum += w[j];
  }
  if (!(wsum > 0.0) || !std::isfinite(wsum)) {
    throw NumericError("update_distribution: all elite weights underflow to zero");
  }
  Vec2 mean = Vec2::Zero();
  for (std::size_t j = 0; j < elites.size(); ++j) mean += w[j] * elites[j].p.as_vector();
  mean /= wsum;
  SamplingDistribution out;
  out.mu = (1.0 - eta) * dist.mu + eta * mean;
  Mat2 cov = Mat2::Zero();
  for (std::size_t j = 0; j < elites.size(); ++j) {
    const Vec2 diff = elites[j].p.as_vector() - out.mu;
    cov += w[j] * diff * diff.transpose();
  }
  cov /= wsum;
  out.sigma = (1.0 - eta) * dist.sigma + eta * cov;
  out.sigma = 0.5 * (out.sigma + out.sigma.transpose()).eval();
  out.sigma += cov_floor * Mat2::Identity();
  return out;
}

struct IterationResult {
  SamplingDistribution next;
  std::vector<CandidateRecord> candidates;
  std::vector<int> constraint_elites;
  std::vector<int> elites;
  int best = -1;

  const CandidateRecord& best_candidate() const { return candidates.at(best); }
};

inline IterationResult iterate(const SamplingDistribution& dist, const SceneContext& ctx,
                               const OptimizerConfig& cfg, std::uint64_t rng_seed) {
  cfg.validate();
  require(ctx.seeds != nullptr && ctx.kkt.has_value(), "iterate: scene context is incomplete");
  auto behaviors = sample_behaviors(dist, cfg.n_bar_s, rng_seed);
  if (cfg.clamp_behaviors) {
    const auto& lim = ctx.problem.limits;
    for (auto& b : behaviors) {
      b.lateral_offset_target = std::clamp(b.lateral_offset_target, lim.y_lb, lim.y_ub);
      b.velocity_setpoint = std::clamp(b.velocity_setpoint, lim.v_min, lim.v_max);
    }
  }
  const int count = cfg.n_bar_s;
  const SeedSolver& solver = *ctx.seeds;

  Mat B(solver.A().rows(), count);
  for (int j = 0; j < count; ++j) B.col(j) = solver.boundary_vector(behaviors[j], ctx.ego);
  const Mat seeds = solver.seed_batch(B);
  const auto projected = project_batch(ctx.problem, *ctx.kkt, seeds, B, cfg.projection);

  IterationResult out;
  out.candidates.resize(count);
  std::vector<double> residuals(count);
  std::vector<int> all(count);
  std::iota(all.begin(), all.end(), 0);
  for (int j = 0; j < count; ++j) {
    auto& c = out.candidates[j];
    c.index = j;
    c.p = behaviors[j];
    c.xi_seed = seeds.col(j);
    c.xi_projected = projected[j].xi;
    c.converged = projected[j].converged;
    c.projection_iters = projected[j].iterations;
    c.residual = residual_norm(ctx.problem, c.xi_projected);
    residuals[j] = c.residual;
  }
  out.constraint_elites = select_lowest(residuals, all, cfg.n_s);

  std::vector<double> totals(count, std::numeric_limits<double>::infinity());
  std::vector<int> finite;
  for (int j : out.constraint_elites) {
    auto& c = out.candidates[j];
    const StateSequence traj = eval_trajectory(ctx.basis(), c.xi_projected);
    c.c_a = analytic_cost(traj, ctx.reference, ctx.weights);
    c.c_bev = cfg.bev_weight *
              collision_cost(ctx, traj, mix_seed(rng_seed, 1000003ULL + j), cfg.correlated_noise).value;
    c.total = c.c_a + c.c_bev + c.residual;
    c.evaluated = true;
    if (std::isfinite(c.total)) {
      totals[j] = c.total;
      finite.push_back(j);
    }
  }
  if (static_cast<int>(finite.size()) < cfg.n_e) {
    throw NumericError("iterate: only " + std::to_string(finite.size()) +
                       " finite-cost candidates for an elite set of " + std::to_string(cfg.n_e));
  }
  out.elites = select_lowest(totals, finite, cfg.n_e);
  out.best = out.elites.front();

  std::vector<EliteSample> elite_samples;
  elite_samples.reserve(out.elites.size());
  for (int j : out.elites) elite_samples.push_back({out.candidates[j].p, out.candidates[j].total});
  out.next = update_distribution(dist, elite_samples, cfg.beta, cfg.eta, cfg.cov_floor);
  return out;
}

struct IterationDiagnostics {
  int iteration = 0;
  double best_total = 0.0;
  double mean_total = 0.0;  // over the elite set
  double covariance_trace = 0.0;
  double residual_min = 0.0;
  double residual_median = 0.0;
  double residual_max = 0.0;
  int converged_count = 0;
};

struct OptimizeResult {
  CandidateRecord best;
  SamplingDistribution final_distribution;
  std::vector<IterationDiagnostics> diagnostics;
};

inline OptimizeResult optimize(const SceneContext& ctx, const OptimizerConfig& cfg,
                               const SamplingDistribution& initial, std::uint64_t rng_seed) {
  cfg.validate();
  OptimizeResult out;
  SamplingDistribution dist = initial;
  bool have_best = false;
  for (int l = 0; l < cfg.iters; ++l) {
    IterationResult it = iterate(dist, ctx, cfg, mix_seed(rng_seed, static_cast<std::uint64_t>(l)));
    const CandidateRecord& best = it.best_candidate();
    if (!cfg.return_all_time_best || !have_best || best.total < out.best.total) {
      out.best = best;
      have_best = true;
    }

    IterationDiagnostics diag;
    diag.iteration = l;
    diag.best_total = best.total;
    double sum = 0.0;
    for (int j : it.elites) sum += it.candidates[j].total;
    diag.mean_total = sum / static_cast<double>(it.elites.size());
    diag.covariance_trace = dist.sigma.trace();
    std::vector<double> res;
    res.reserve(it.candidates.size());
    for (const auto& c : it.candidates) {
      res.push_back(c.residual);
      diag.converged_count += c.converged ? 1 : 0;
    }
    std::sort(res.begin(), res.end());
    diag.residual_min = res.front();
    diag.residual_median = res[res.size() / 2];
    diag.residual_max = res.back();
    out.diagnostics.push_back(diag);
    dist = it.next;
  }
  out.final_distribution = dist;
  return out;
}

}  // namespace uapbev
