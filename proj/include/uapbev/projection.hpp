#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "uapbev/common.hpp"
#include "uapbev/frenet_seed.hpp"
#include "uapbev/trajectory_basis.hpp"

namespace uapbev {

struct PlannerLimits {
  double v_min = 0.0;
  double v_max = 10.0;
  double a_max = 4.0;
  double y_lb = -1.0;
  double y_ub = 1.0;
  double gamma_lane = 0.9;
  double gamma_long = 0.9;
  double s_min = 4.0;
  double r_safe = 3.0;
  double rho = 1.0;

  void validate() const {
    if (!(v_min <= v_max)) throw ConfigError("limits: v_min must not exceed v_max");
    if (!(a_max > 0.0)) throw ConfigError("limits: a_max must be positive");
    if (!(y_lb < y_ub)) throw ConfigError("limits: y_lb must be below y_ub");
    if (!(gamma_lane > 0.0 && gamma_lane <= 1.0)) throw ConfigError("limits: gamma_lane must be in (0, 1]");
    if (!(gamma_long > 0.0 && gamma_long <= 1.0)) throw ConfigError("limits: gamma_long must be in (0, 1]");
    if (!(rho >= 0.0)) throw ConfigError("limits: rho must be non-negative");
    if (!(r_safe > 0.0)) throw ConfigError("limits: r_safe must be positive");
  }
};

// Predicted longitudinal (Frenet, ego-relative) positions of the lead
// vehicle at planner steps k = 0..n-1.
struct LeadVehicleTrack {
  Vec x_o;
};

// Everything the alternating-minimization projection needs. Rows of F are
// [Ftilde; G]; Ftilde stacks (W1, W2) on the x block then the y block, so
// F*xi lines up with e = [dv cos av; da cos aa; dv sin av; da sin aa; b_barrier - s].
struct ProjectionProblem {
  int n = 0;            // horizon steps
  int axis_coeffs = 0;  // coefficients per axis
  Mat W, W1, W2;
  Mat A;
  Vec b;
  Mat Ftilde;
  Mat G;
  Vec b_barrier;
  Vec d_min, d_max;  // (velocity magnitudes, acceleration magnitudes)
  double rho = 1.0;
  PlannerLimits limits;
  bool has_lead = false;

  int xi_size() const { return 2 * axis_coeffs; }
  int ftilde_rows() const { return 4 * n; }
  int barrier_rows() const { return static_cast<int>(G.rows()); }

  Mat F() const {
    Mat f(Ftilde.rows() + G.rows(), xi_size());
    f << Ftilde, G;
    return f;
  }
};

inline ProjectionProblem build_problem(const BasisSet& basis, const BoundaryConditions& bc,
                                       const PlannerLimits& limits,
                                       const std::optional<LeadVehicleTrack>& lead = std::nullopt) {
  limits.validate();
  const int n = basis.n;
  const int m = basis.coeff_count();
  require_dims(bc.A.cols() == 2 * m, "build_problem: boundary matrix has " +
                                         std::to_string(bc.A.cols()) + " columns, expected " +
                                         std::to_string(2 * m));
  require_dims(bc.b.size() == bc.A.rows(), "build_problem: boundary vector length mismatch");
  require(n >= 2, "build_problem: horizon needs at least two steps");
  if (lead) {
    require_dims(lead->x_o.size() == n, "build_problem: lead track has " +
                                            std::to_string(lead->x_o.size()) +
                                            " entries, expected " + std::to_string(n));
  }

  ProjectionProblem p;
  p.n = n;
  p.axis_coeffs = m;
  p.W = basis.W;
  p.W1 = basis.W1;
  p.W2 = basis.W2;
  p.A = bc.A;
  p.b = bc.b;
  p.rho = limits.rho;
  p.limits = limits;
  p.has_lead = lead.has_value();

  p.Ftilde = Mat::Zero(4 * n, 2 * m);
  p.Ftilde.block(0, 0, n, m) = basis.W1;
  p.Ftilde.block(n, 0, n, m) = basis.W2;
  p.Ftilde.block(2 * n, m, n, m) = basis.W1;
  p.Ftilde.block(3 * n, m, n, m) = basis.W2;

  const Mat W_next = basis.W.bottomRows(n - 1);  // W[1:n]
  const Mat W_prev = basis.W.topRows(n - 1);     // W[0:n-1]
  const int rows = (lead ? 3 : 2) * (n - 1);
  p.G = Mat::Zero(rows, 2 * m);
  p.b_barrier = Vec::Zero(rows);
  const double gl = limits.gamma_lane;
  // h_ub = y_ub - y:  y[k+1] - (1 - g) y[k] <= g * y_ub
  p.G.block(0, m, n - 1, m) = W_next + (gl - 1.0) * W_prev;
  p.b_barrier.segment(0, n - 1).setConstant(gl * limits.y_ub);
  // h_lb = y - y_lb: -y[k+1] + (1 - g) y[k] <= -g * y_lb
  p.G.block(n - 1, m, n - 1, m) = -W_next + (1.0 - gl) * W_prev;
  p.b_barrier.segment(n - 1, n - 1).setConstant(-gl * limits.y_lb);
  if (lead) {
    // h = x_o - x - s_min: x[k+1] - (1 - g) x[k] <= x_o[k+1] - (1 - g) x_o[k] - g * s_min
    const double g = limits.gamma_long;
    p.G.block(2 * (n - 1), 0, n - 1, m) = W_next + (g - 1.0) * W_prev;
    p.b_barrier.segment(2 * (n - 1), n - 1) =
        lead->x_o.tail(n - 1) + (g - 1.0) * lead->x_o.head(n - 1) -
        Vec::Constant(n - 1, g * limits.s_min);
  }

  p.d_min.resize(2 * n);
  p.d_max.resize(2 * n);
  p.d_min << Vec::Constant(n, limits.v_min), Vec::Zero(n);
  p.d_max << Vec::Constant(n, limits.v_max), Vec::Constant(n, limits.a_max);
  return p;
}

// AM iterates for one candidate.
struct ProjectionState {
  Vec xi;
  Vec alpha;   // (alpha_v, alpha_a), length 2n
  Vec d;       // (d_v, d_a), length 2n
  Vec lambda;  // length of xi
  Vec s;       // barrier slacks, >= 0
  Vec e;       // [e~(alpha, d); b_barrier - s]
};

struct PolarParts {
  Vec alpha;
  Vec d;
};

// Closed-form minimizer over (alpha, d) of ||Ftilde xi - e~(alpha, d)||^2 with
// d boxed: the Euclidean projection of each derivative pair onto its annulus.
inline PolarParts polar_update(const ProjectionProblem& p, const Vec& xi) {
  const int n = p.n;
  const Vec fx = p.Ftilde * xi;
  PolarParts out{Vec(2 * n), Vec(2 * n)};
  for (int block = 0; block < 2; ++block) {  // 0: velocity, 1: acceleration
    for (int k = 0; k < n; ++k) {
      const double cx = fx[block * n + k];
      const double cy = fx[(block + 2) * n + k];
      const int idx = block * n + k;
      out.alpha[idx] = (cx == 0.0 && cy == 0.0) ? 0.0 : std::atan2(cy, cx);
      out.d[idx] = std::clamp(std::hypot(cx, cy), p.d_min[idx], p.d_max[idx]);
    }
  }
  return out;
}

inline Vec polar_target(const ProjectionProblem& p, const Vec& alpha, const Vec& d) {
  const int n = p.n;
  Vec e(4 * n);
  for (int block = 0; block < 2; ++block) {
    for (int k = 0; k < n; ++k) {
      const int idx = block * n + k;
      e[block * n + k] = d[idx] * std::cos(alpha[idx]);
      e[(block + 2) * n + k] = d[idx] * std::sin(alpha[idx]);
    }
  }
  return e;
}

// argmin_{s >= 0} ||G xi - b_barrier + s||^2
inline Vec slack_update(const ProjectionProblem& p, const Vec& xi) {
  return (p.b_barrier - p.G * xi).cwiseMax(0.0);
}

struct MultiplierTarget {
  Vec lambda;
  Vec e;
};

// Dual step on the residual of the previous iterate, then the new target
// vector assembled from the fresh polar and slack variables.
inline MultiplierTarget multiplier_target_update(const ProjectionProblem& p, const Mat& F,
                                                 const Vec& xi, const Vec& lambda, const Vec& e_prev,
                                                 const PolarParts& polar, const Vec& s) {
  require_dims(F.rows() == e_prev.size() && F.cols() == xi.size() && lambda.size() == xi.size(),
               "multiplier_target_update: dimension mismatch");
  require_dims(s.size() == p.barrier_rows(), "multiplier_target_update: slack length mismatch");
  MultiplierTarget out;
  out.lambda = lambda - p.rho * F.transpose() * (F * xi - e_prev);
  out.e.resize(e_prev.size());
  out.e << polar_target(p, polar.alpha, polar.d), p.b_barrier - s;
  return out;
}

// Factorized KKT operator of the xi-step:
//   [I + rho F^T F, A^T; A, 0] [xi; nu] = [seed + lambda + rho F^T e; b].
// The matrix depends only on (F, A, rho), so one factorization serves every
// candidate and every AM iteration.
class KktOperator {
 public:
  explicit KktOperator(const ProjectionProblem& p) : F_(p.F()), rho_(p.rho) {
    const int nx = p.xi_size();
    const int nc = static_cast<int>(p.A.rows());
    kkt_ = Mat::Zero(nx + nc, nx + nc);
    kkt_.topLeftCorner(nx, nx) = Mat::Identity(nx, nx) + rho_ * F_.transpose() * F_;
    kkt_.topRightCorner(nx, nc) = p.A.transpose();
    kkt_.bottomLeftCorner(nc, nx) = p.A;
    Eigen::FullPivLU<Mat> lu(kkt_);
    if (!lu.isInvertible()) {
      throw NumericError("projection KKT matrix is singular (rank " + std::to_string(lu.rank()) +
                         " of " + std::to_string(nx + nc) + ")");
    }
    const Mat inv = lu.inverse();
    P_ = inv.topLeftCorner(nx, nx);
    Q_ = inv.topRightCorner(nx, nc);
  }

  const Mat& F() const { return F_; }
  const Mat& kkt() const { return kkt_; }
  double rho() const { return rho_; }

  Vec solve(const Vec& seed, const Vec& lambda, const Vec& e, const Vec& b) const {
    return P_ * (seed + lambda + rho_ * F_.transpose() * e) + Q_ * b;
  }

  Mat solve_batch(const Mat& rhs_top, const Mat& B) const { return P_ * rhs_top + Q_ * B; }

  const Mat& P() const { return P_; }
  const Mat& Q() const { return Q_; }

 private:
  Mat F_;
  double rho_;
  Mat kkt_;
  Mat P_, Q_;
};

inline Vec xi_update(const ProjectionProblem& p, const Vec& seed_xi, const Vec& lambda,
                     const Vec& e) {
  const KktOperator op(p);
  return op.solve(seed_xi, lambda, e, p.b);
}

// Sum of hinge-violation norms of the inequality set on the decoded trajectory.
inline double residual_norm(const ProjectionProblem& p, const Vec& xi) {
  const int m = p.axis_coeffs;
  const auto cx = xi.head(m);
  const auto cy = xi.tail(m);
  const Vec vx = p.W1 * cx, vy = p.W1 * cy;
  const Vec ax = p.W2 * cx, ay = p.W2 * cy;
  const Vec speed = (vx.array().square() + vy.array().square()).sqrt();
  const Vec accel = (ax.array().square() + ay.array().square()).sqrt();
  const double barrier = (p.G * xi - p.b_barrier).cwiseMax(0.0).norm();
  const double over = (speed.array() - p.limits.v_max).cwiseMax(0.0).matrix().norm();
  const double under = (p.limits.v_min - speed.array()).cwiseMax(0.0).matrix().norm();
  const double acc = (accel.array() - p.limits.a_max).cwiseMax(0.0).matrix().norm();
  return barrier + over + under + acc;
}

struct ProjectionResult {
  Vec xi;
  std::vector<double> residual_history;  // ||F xi - e||_inf per iteration
  bool converged = false;
  int iterations = 0;
};

struct ProjectionSettings {
  int max_iters = 75;
  double tol = 1e-3;
};

namespace detail {

// Target e = [annulus projection of Ftilde xi; min(G xi, b_barrier)] for each
// column of FX = F * Xi. Equivalent to polar_update + slack_update.
inline void projection_targets(const ProjectionProblem& p, const Mat& FX, Mat& E) {
  const int n = p.n;
  const int g0 = 4 * n;
  E.resize(FX.rows(), FX.cols());
  for (Eigen::Index c = 0; c < FX.cols(); ++c) {
    for (int block = 0; block < 2; ++block) {
      for (int k = 0; k < n; ++k) {
        const int idx = block * n + k;
        const double vx = FX(block * n + k, c);
        const double vy = FX((block + 2) * n + k, c);
        const double r = std::hypot(vx, vy);
        const double d = std::clamp(r, p.d_min[idx], p.d_max[idx]);
        if (r > 0.0) {
          E(block * n + k, c) = vx * (d / r);
          E((block + 2) * n + k, c) = vy * (d / r);
        } else {
          E(block * n + k, c) = d;
          E((block + 2) * n + k, c) = 0.0;
        }
      }
    }
    for (Eigen::Index r = g0; r < FX.rows(); ++r) {
      E(r, c) = std::min(FX(r, c), p.b_barrier[r - g0]);
    }
  }
}

}  // namespace detail

// Batched AM projection. Column j of `seeds` / `B` is one candidate with its
// own equality target b(p_j). Converged columns freeze and leave the working
// set.
inline std::vector<ProjectionResult> project_batch(const ProjectionProblem& p, const KktOperator& op,
                                                   const Mat& seeds, const Mat& B,
                                                   const ProjectionSettings& settings = {}) {
  require(settings.max_iters >= 1, "project: max_iters must be >= 1");
  require_dims(seeds.rows() == p.xi_size() && B.rows() == p.A.rows() && seeds.cols() == B.cols(),
               "project_batch: dimension mismatch");
  const Eigen::Index batch = seeds.cols();
  const Mat& F = op.F();
  const Mat Ft = F.transpose();
  const Mat FtF = Ft * F;
  const double rho = op.rho();

  std::vector<ProjectionResult> results(static_cast<std::size_t>(batch));
  std::vector<Eigen::Index> active(static_cast<std::size_t>(batch));
  for (Eigen::Index c = 0; c < batch; ++c) active[c] = c;

  // Working set, one column per active candidate. F^T e of the previous
  // target is kept so the multiplier step needs only F^T F xi.
  Mat S = seeds;
  Mat QB = op.Q() * B;
  Mat Xi = seeds;
  Mat Lambda = Mat::Zero(Xi.rows(), batch);
  Mat FX = F * Xi;
  Mat E;
  detail::projection_targets(p, FX, E);
  Mat FtE_prev = Ft * E;
  Mat FtE;

  for (int u = 1; u <= settings.max_iters && !active.empty(); ++u) {
    const Eigen::Index na = static_cast<Eigen::Index>(active.size());
    detail::projection_targets(p, FX, E);
    FtE.noalias() = Ft * E;
    Lambda.noalias() -= rho * (FtF * Xi - FtE_prev);
    Xi.noalias() = op.P() * (S + Lambda + rho * FtE);
    Xi += QB;
    FX.noalias() = F * Xi;
    FtE_prev.swap(FtE);

    std::vector<Eigen::Index> keep;
    keep.reserve(active.size());
    for (Eigen::Index c = 0; c < na; ++c) {
      const double res = (FX.col(c) - E.col(c)).cwiseAbs().maxCoeff();
      auto& r = results[active[c]];
      r.residual_history.push_back(res);
      r.iterations = u;
      if (res <= settings.tol) {
        r.converged = true;
        r.xi = Xi.col(c);
      } else {
        keep.push_back(c);
      }
    }
    if (static_cast<Eigen::Index>(keep.size()) != na) {
      auto compact = [&](Mat& m) {
        Mat out(m.rows(), static_cast<Eigen::Index>(keep.size()));
        for (std::size_t i = 0; i < keep.size(); ++i) out.col(i) = m.col(keep[i]);
        m.swap(out);
      };
      compact(S);
      compact(QB);
      compact(Xi);
      compact(Lambda);
      compact(FX);
      compact(FtE_prev);
      std::vector<Eigen::Index> next;
      next.reserve(keep.size());
      for (Eigen::Index c : keep) next.push_back(active[c]);
      active.swap(next);
    }
  }
  for (std::size_t i = 0; i < active.size(); ++i) {
    results[active[i]].xi = Xi.col(static_cast<Eigen::Index>(i));
  }
  return results;
}

inline ProjectionResult project(const Vec& seed_xi, const ProjectionProblem& p, int max_iters = 75,
                                double tol = 1e-3) {
  const KktOperator op(p);
  return project_batch(p, op, seed_xi, p.b, {max_iters, tol}).front();
}

}  // namespace uapbev
