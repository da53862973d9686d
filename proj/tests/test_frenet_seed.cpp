#include <gtest/gtest.h>

#include <random>

#include "uapbev/frenet_seed.hpp"

using namespace uapbev;

namespace {

const BasisSet& basis() {
  static const BasisSet b = build_basis(6, 5, 0.1);
  return b;
}

}  // namespace

TEST(Sampling, ZeroCovarianceReturnsMean) {
  SamplingDistribution d{Vec2(1.5, 7.0), Mat2::Zero()};
  for (const auto& p : sample_behaviors(d, 25, 99)) {
    EXPECT_EQ(p.lateral_offset_target, 1.5);
    EXPECT_EQ(p.velocity_setpoint, 7.0);
  }
}

TEST(Sampling, FixedSeedIsReproducible) {
  SamplingDistribution d{Vec2(0.0, 5.0), (Mat2() << 1.0, 0.3, 0.3, 2.0).finished()};
  const auto a = sample_behaviors(d, 50, 1234);
  const auto b = sample_behaviors(d, 50, 1234);
  const auto c = sample_behaviors(d, 50, 1235);
  bool differs = false;
  for (int i = 0; i < 50; ++i) {
    EXPECT_EQ(a[i].lateral_offset_target, b[i].lateral_offset_target);
    EXPECT_EQ(a[i].velocity_setpoint, b[i].velocity_setpoint);
    differs = differs || a[i].velocity_setpoint != c[i].velocity_setpoint;
  }
  EXPECT_TRUE(differs);
}

TEST(Sampling, LawOfLargeNumbers) {
  SamplingDistribution d{Vec2(-1.0, 6.0), Mat2::Identity()};
  const auto s = sample_behaviors(d, 10000, 42);
  Vec2 mean = Vec2::Zero();
  for (const auto& p : s) mean += p.as_vector();
  mean /= 10000.0;
  EXPECT_NEAR(mean.x(), -1.0, 0.05);
  EXPECT_NEAR(mean.y(), 6.0, 0.05);
}

TEST(Sampling, CovarianceRecovered) {
  const Mat2 sigma = (Mat2() << 2.0, -0.8, -0.8, 1.0).finished();
  SamplingDistribution d{Vec2::Zero(), sigma};
  const auto s = sample_behaviors(d, 20000, 8);
  Mat2 cov = Mat2::Zero();
  for (const auto& p : s) cov += p.as_vector() * p.as_vector().transpose();
  cov /= 20000.0;
  EXPECT_LT((cov - sigma).cwiseAbs().maxCoeff(), 0.08);
}

TEST(Sampling, RejectsInvalidCovariance) {
  SamplingDistribution d{Vec2::Zero(), (Mat2() << 1.0, 0.0, 0.0, -1.0).finished()};
  EXPECT_THROW(sample_behaviors(d, 5, 1), NumericError);
  d.sigma = (Mat2() << 1.0, 0.5, 0.0, 1.0).finished();
  EXPECT_THROW(sample_behaviors(d, 5, 1), NumericError);
  d.sigma = Mat2::Identity();
  EXPECT_THROW(sample_behaviors(d, 0, 1), Error);
}

TEST(Seed, NullSeed) {
  const auto r = seed_trajectory({0.0, 0.0}, EgoFrenetState{}, basis());
  EXPECT_EQ(r.coeffs.stacked().cwiseAbs().maxCoeff(), 0.0);
  const auto t = eval_trajectory(basis(), r.coeffs);
  EXPECT_EQ(t.x.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(t.y.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Seed, SteadyState) {
  EgoFrenetState ego;
  ego.vs = 5.0;
  const auto r = seed_trajectory({0.0, 5.0}, ego, basis());
  const auto t = eval_trajectory(basis(), r.coeffs);
  EXPECT_LT(t.ax.cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT(t.ay.cwiseAbs().maxCoeff(), 1e-9);
  for (int k = 0; k < basis().n; ++k) {
    EXPECT_NEAR(t.x[k], 5.0 * k * basis().dt, 1e-9);
    EXPECT_NEAR(t.vx[k], 5.0, 1e-9);
    EXPECT_NEAR(t.y[k], 0.0, 1e-9);
  }
}

TEST(Seed, SatisfiesBoundarySystem) {
  const auto r = seed_trajectory({2.0, 8.0}, EgoFrenetState{}, basis());
  EXPECT_LE((r.bc.A * r.coeffs.stacked() - r.bc.b).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Seed, BoundaryValuesAppearInTrajectory) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  const SeedSolver solver(basis());
  const int last = basis().n - 1;
  for (int trial = 0; trial < 100; ++trial) {
    EgoFrenetState ego{0.0, u(rng), 6.0 + u(rng), 0.3 * u(rng), u(rng), u(rng)};
    const BehavioralInput p{u(rng), 8.0 + 2.0 * u(rng)};
    const auto bc = solver.conditions(p, ego);
    const Vec xi = solver.seed(bc.b);
    EXPECT_LE((bc.A * xi - bc.b).cwiseAbs().maxCoeff(), 1e-8);
    const auto t = eval_trajectory(basis(), xi);
    EXPECT_NEAR(t.x[0], ego.s, 1e-8);
    EXPECT_NEAR(t.vx[0], ego.vs, 1e-8);
    EXPECT_NEAR(t.ax[0], ego.as, 1e-8);
    EXPECT_NEAR(t.y[0], ego.d, 1e-8);
    EXPECT_NEAR(t.vy[0], ego.vd, 1e-8);
    EXPECT_NEAR(t.ay[0], ego.ad, 1e-8);
    EXPECT_NEAR(t.vx[last], p.velocity_setpoint, 1e-8);
    EXPECT_NEAR(t.ax[last], 0.0, 1e-8);
    EXPECT_NEAR(t.y[last], p.lateral_offset_target, 1e-8);
    EXPECT_NEAR(t.vy[last], 0.0, 1e-8);
    EXPECT_NEAR(t.ay[last], 0.0, 1e-8);
  }
}

TEST(Seed, BatchMatchesSingle) {
  const SeedSolver solver(basis());
  EgoFrenetState ego{0.0, 0.4, 7.0, 0.0, 0.5, 0.0};
  Mat B(solver.A().rows(), 3);
  const BehavioralInput ps[3] = {{0.0, 8.0}, {1.0, 6.0}, {-0.5, 9.0}};
  for (int j = 0; j < 3; ++j) B.col(j) = solver.boundary_vector(ps[j], ego);
  const Mat X = solver.seed_batch(B);
  for (int j = 0; j < 3; ++j) EXPECT_LT((X.col(j) - solver.seed(B.col(j))).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Seed, FullRowRank) {
  const SeedSolver solver(basis());
  Eigen::FullPivLU<Mat> lu(solver.A());
  EXPECT_EQ(lu.rank(), solver.A().rows());
}

TEST(Seed, RankDeficientSystemRejected) {
  // A single segment of 2 steps cannot carry both initial and terminal
  // conditions on a cubic.
  EXPECT_THROW(SeedSolver(build_basis(1, 2, 0.1)), NumericError);
}

TEST(AnalyticCost, ZeroAtSteadyState) {
  EgoFrenetState ego;
  ego.vs = 6.0;
  const BehavioralInput p{0.0, 6.0};
  const auto r = seed_trajectory(p, ego, basis());
  const auto t = eval_trajectory(basis(), r.coeffs);
  EXPECT_NEAR(analytic_cost(t, p, AnalyticWeights{}), 0.0, 1e-12);
}

TEST(AnalyticCost, LinearInWeights) {
  const auto r = seed_trajectory({1.0, 9.0}, EgoFrenetState{0.0, 0.0, 4.0, 0.0, 0.0, 0.0}, basis());
  const auto t = eval_trajectory(basis(), r.coeffs);
  const BehavioralInput p{1.0, 9.0};
  const AnalyticWeights w1{1.0, 0.0, 0.0}, w2{2.0, 0.0, 0.0}, wv{0.0, 0.5, 0.2};
  const double s1 = analytic_cost(t, p, w1);
  EXPECT_GT(s1, 0.0);
  EXPECT_NEAR(analytic_cost(t, p, w2), 2.0 * s1, 1e-9);
  EXPECT_NEAR(analytic_cost(t, p, {2.0, 0.5, 0.2}) - analytic_cost(t, p, {1.0, 0.5, 0.2}), s1, 1e-9);
  EXPECT_NEAR(analytic_cost(t, p, {1.0, 0.5, 0.2}), s1 + analytic_cost(t, p, wv), 1e-9);
}

TEST(AnalyticCost, MatchesTermByTermOracle) {
  std::mt19937_64 rng(23);
  std::normal_distribution<double> g(0.0, 2.0);
  const AnalyticWeights w{1.3, 0.7, 0.4};
  for (int trial = 0; trial < 30; ++trial) {
    auto t = StateSequence::zeros(30);
    for (int k = 0; k < 30; ++k) {
      t.x[k] = g(rng);
      t.y[k] = g(rng);
      t.vx[k] = g(rng);
      t.vy[k] = g(rng);
      t.ax[k] = g(rng);
      t.ay[k] = g(rng);
    }
    const BehavioralInput p{0.0, 5.0 + g(rng)};
    double expect = 0.0;
    for (int k = 0; k < 30; ++k) {
      const double speed = std::sqrt(t.vx[k] * t.vx[k] + t.vy[k] * t.vy[k]);
      expect += w.smooth * (t.ax[k] * t.ax[k] + t.ay[k] * t.ay[k]);
      expect += w.velocity * (speed - p.velocity_setpoint) * (speed - p.velocity_setpoint);
      expect += w.lateral * t.y[k] * t.y[k];
    }
    EXPECT_NEAR(analytic_cost(t, p, w), expect, 1e-9 * std::max(1.0, expect));
  }
}
