#pragma once

#include <string>
#include <vector>

#include "uapbev/common.hpp"
#include "uapbev/trajectory_basis.hpp"

namespace uapbev {

// High-level decision that parameterizes a seed trajectory.
struct BehavioralInput {
  double lateral_offset_target = 0.0;  // terminal d (m)
  double velocity_setpoint = 0.0;      // terminal longitudinal speed (m/s)

  Vec2 as_vector() const { return {lateral_offset_target, velocity_setpoint}; }
  static BehavioralInput from_vector(const Vec2& v) { return {v.x(), v.y()}; }
};

struct SamplingDistribution {
  Vec2 mu = Vec2::Zero();
  Mat2 sigma = Mat2::Zero();
};

// Planner-frame ego state. Longitudinal coordinates are relative to the ego,
// so `s` is normally 0.
struct EgoFrenetState {
  double s = 0.0, d = 0.0;
  double vs = 0.0, vd = 0.0;
  double as = 0.0, ad = 0.0;
};

namespace detail {

// Returns L with L * L^T = sigma for a symmetric PSD sigma.
inline Mat2 psd_factor(const Mat2& sigma) {
  constexpr double kTol = 1e-12;
  if (!sigma.allFinite() || (sigma - sigma.transpose()).cwiseAbs().maxCoeff() > kTol) {
    throw NumericError("sampling covariance is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Mat2> eig(sigma);
  const Vec2 vals = eig.eigenvalues();
  if (vals.minCoeff() < -kTol * std::max(1.0, vals.cwiseAbs().maxCoeff())) {
    throw NumericError("sampling covariance is not positive semi-definite");
  }
  return eig.eigenvectors() * vals.cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

}  // namespace detail

inline std::vector<BehavioralInput> sample_behaviors(const SamplingDistribution& dist, int count,
                                                     std::uint64_t rng_seed) {
  require(count >= 1, "sample_behaviors: count must be >= 1");
  const Mat2 L = detail::psd_factor(dist.sigma);
  Rng rng = make_rng(rng_seed);
  std::vector<BehavioralInput> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    Vec2 z;
    z.x() = standard_normal(rng);
    z.y() = standard_normal(rng);
    out.push_back(BehavioralInput::from_vector(dist.mu + L * z));
  }
  return out;
}

// Equality system A * xi = b over xi = (cx, cy). Per axis the rows are:
// initial position/velocity/acceleration, C2 continuity at every join, then
// terminal conditions at the last horizon step (x: velocity, acceleration;
// y: position, velocity, acceleration).
struct BoundaryConditions {
  Mat A;
  Vec b;
  int x_rows = 0;
  int y_rows = 0;
};

// Linear map b -> seed coefficients. The seed minimizes the squared norm of
// the cubic coefficients (jerk per segment) subject to A * xi = b, so a
// steady-state boundary vector yields the zero-jerk trajectory.
class SeedSolver {
 public:
  explicit SeedSolver(const BasisSet& basis) : basis_(basis) {
    const int m = basis.coeff_count();
    const int joins = 3 * (basis.segment_count - 1);
    const int last = basis.n - 1;
    x_rows_ = 3 + joins + 2;
    y_rows_ = 3 + joins + 3;
    A_ = Mat::Zero(x_rows_ + y_rows_, 2 * m);

    auto fill_axis = [&](int row0, int col0, bool terminal_position) {
      int r = row0;
      for (int q = 0; q < 3; ++q) A_.block(r++, col0, 1, m) = basis.derivative(q).row(0);
      if (joins > 0) {
        A_.block(r, col0, joins, m) = basis.C;
        r += joins;
      }
      for (int q = terminal_position ? 0 : 1; q < 3; ++q) {
        A_.block(r++, col0, 1, m) = basis.derivative(q).row(last);
      }
    };
    fill_axis(0, 0, false);
    fill_axis(x_rows_, m, true);

    Eigen::FullPivLU<Mat> lu_a(A_);
    if (lu_a.rank() < A_.rows()) {
      throw NumericError("boundary system is rank deficient (rank " + std::to_string(lu_a.rank()) +
                         " < " + std::to_string(A_.rows()) + " rows); use more segments");
    }

    // KKT of min 0.5*||J xi||^2 s.t. A xi = b, J selecting every c3.
    const int nx = 2 * m;
    const int nc = static_cast<int>(A_.rows());
    Mat kkt = Mat::Zero(nx + nc, nx + nc);
    for (int j = 0; j < 2 * basis.segment_count; ++j) kkt(4 * j + 3, 4 * j + 3) = 1.0;
    kkt.block(0, nx, nx, nc) = A_.transpose();
    kkt.block(nx, 0, nc, nx) = A_;
    Eigen::FullPivLU<Mat> lu(kkt);
    if (!lu.isInvertible()) throw NumericError("seed KKT system is singular");
    Mat rhs = Mat::Zero(nx + nc, nc);
    rhs.bottomRows(nc) = Mat::Identity(nc, nc);
    seed_map_ = lu.solve(rhs).topRows(nx);
  }

  const BasisSet& basis() const { return basis_; }
  const Mat& A() const { return A_; }
  int x_rows() const { return x_rows_; }
  int y_rows() const { return y_rows_; }

  Vec boundary_vector(const BehavioralInput& p, const EgoFrenetState& ego) const {
    Vec b = Vec::Zero(A_.rows());
    b[0] = ego.s;
    b[1] = ego.vs;
    b[2] = ego.as;
    b[x_rows_ - 2] = p.velocity_setpoint;
    b[x_rows_ - 1] = 0.0;
    b[x_rows_ + 0] = ego.d;
    b[x_rows_ + 1] = ego.vd;
    b[x_rows_ + 2] = ego.ad;
    b[x_rows_ + y_rows_ - 3] = p.lateral_offset_target;
    b[x_rows_ + y_rows_ - 2] = 0.0;
    b[x_rows_ + y_rows_ - 1] = 0.0;
    return b;
  }

  BoundaryConditions conditions(const BehavioralInput& p, const EgoFrenetState& ego) const {
    return {A_, boundary_vector(p, ego), x_rows_, y_rows_};
  }

  Vec seed(const Vec& b) const { return seed_map_ * b; }
  Mat seed_batch(const Mat& B) const { return seed_map_ * B; }

 private:
  BasisSet basis_;
  Mat A_;
  Mat seed_map_;
  int x_rows_ = 0;
  int y_rows_ = 0;
};

struct SeedResult {
  TrajectoryCoeffs coeffs;
  BoundaryConditions bc;
};

inline SeedResult seed_trajectory(const BehavioralInput& p, const EgoFrenetState& ego,
                                  const BasisSet& basis) {
  const SeedSolver solver(basis);
  BoundaryConditions bc = solver.conditions(p, ego);
  return {TrajectoryCoeffs::from_stacked(solver.seed(bc.b)), std::move(bc)};
}

struct AnalyticWeights {
  double smooth = 1.0;
  double velocity = 0.5;
  double lateral = 0.2;
};

// Smoothness + speed tracking against p.velocity_setpoint + lateral offset
// from the centerline (the Frenet y coordinate).
inline double analytic_cost(const StateSequence& traj, const BehavioralInput& p,
                            const AnalyticWeights& w) {
  const double smooth = (traj.ax.array().square() + traj.ay.array().square()).sum();
  const double vel = (traj.speed().array() - p.velocity_setpoint).square().sum();
  const double lat = traj.y.array().square().sum();
  return w.smooth * smooth + w.velocity * vel + w.lateral * lat;
}

}  // namespace uapbev
