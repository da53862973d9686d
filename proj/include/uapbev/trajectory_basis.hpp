#pragma once

#include <string>

#include "uapbev/common.hpp"

namespace uapbev {

// Piecewise-cubic basis. Each segment spans `steps_per_segment` samples of
// width `dt`; row k evaluates segment k / steps_per_segment at local time
// tau = (k % steps_per_segment) * dt. Coefficient layout per segment is
// [c0, c1, c2, c3] for c0 + c1*tau + c2*tau^2 + c3*tau^3.
//
// W is block diagonal. Continuity between segments is not baked into W; the
// rows of C express C0/C1/C2 joins and are consumed by the boundary system.
struct BasisSet {
  int segment_count = 0;
  int steps_per_segment = 0;
  double dt = 0.0;
  int n = 0;
  Mat W;   // position
  Mat W1;  // velocity
  Mat W2;  // acceleration
  Mat C;   // 3*(segment_count-1) x 4*segment_count

  int coeff_count() const { return 4 * segment_count; }
  double segment_duration() const { return steps_per_segment * dt; }
  double horizon() const { return n * dt; }

  const Mat& derivative(int q) const {
    switch (q) {
      case 0: return W;
      case 1: return W1;
      case 2: return W2;
      default: throw Error("derivative order must be 0, 1 or 2");
    }
  }
};

namespace detail {

// Row of derivative order q of [1, tau, tau^2, tau^3].
inline Eigen::RowVector4d cubic_row(int q, double tau) {
  switch (q) {
    case 0: return {1.0, tau, tau * tau, tau * tau * tau};
    case 1: return {0.0, 1.0, 2.0 * tau, 3.0 * tau * tau};
    case 2: return {0.0, 0.0, 2.0, 6.0 * tau};
    case 3: return {0.0, 0.0, 0.0, 6.0};
    default: throw Error("cubic_row: derivative order out of range");
  }
}

}  // namespace detail

inline BasisSet build_basis(int segment_count, int steps_per_segment, double dt) {
  if (segment_count <= 0 || steps_per_segment <= 0 || !(dt > 0.0)) {
    throw Error("build_basis: segment_count, steps_per_segment and dt must be positive");
  }
  BasisSet b;
  b.segment_count = segment_count;
  b.steps_per_segment = steps_per_segment;
  b.dt = dt;
  b.n = segment_count * steps_per_segment;
  const int cols = 4 * segment_count;
  b.W = Mat::Zero(b.n, cols);
  b.W1 = Mat::Zero(b.n, cols);
  b.W2 = Mat::Zero(b.n, cols);
  for (int k = 0; k < b.n; ++k) {
    const int seg = k / steps_per_segment;
    const double tau = (k % steps_per_segment) * dt;
    b.W.block<1, 4>(k, 4 * seg) = detail::cubic_row(0, tau);
    b.W1.block<1, 4>(k, 4 * seg) = detail::cubic_row(1, tau);
    b.W2.block<1, 4>(k, 4 * seg) = detail::cubic_row(2, tau);
  }
  b.C = Mat::Zero(3 * (segment_count - 1), cols);
  const double T = b.segment_duration();
  for (int j = 0; j + 1 < segment_count; ++j) {
    for (int q = 0; q < 3; ++q) {
      const int row = 3 * j + q;
      b.C.block<1, 4>(row, 4 * j) = detail::cubic_row(q, T);
      b.C.block<1, 4>(row, 4 * (j + 1)) = -detail::cubic_row(q, 0.0);
    }
  }
  return b;
}

struct TrajectoryCoeffs {
  Vec cx;
  Vec cy;

  // xi = stacked (cx, cy)
  Vec stacked() const {
    Vec xi(cx.size() + cy.size());
    xi << cx, cy;
    return xi;
  }

  static TrajectoryCoeffs from_stacked(const Vec& xi) {
    require_dims(xi.size() % 2 == 0, "stacked coefficient vector must have even length");
    const Eigen::Index half = xi.size() / 2;
    return {xi.head(half), xi.tail(half)};
  }
};

// Per-step positions, velocities and accelerations.
struct StateSequence {
  Vec x, y, vx, vy, ax, ay;

  Eigen::Index size() const { return x.size(); }

  static StateSequence zeros(Eigen::Index n) {
    return {Vec::Zero(n), Vec::Zero(n), Vec::Zero(n), Vec::Zero(n), Vec::Zero(n), Vec::Zero(n)};
  }

  Vec speed() const { return (vx.array().square() + vy.array().square()).sqrt(); }
  Vec accel_norm() const { return (ax.array().square() + ay.array().square()).sqrt(); }
};

inline StateSequence eval_trajectory(const BasisSet& basis, const TrajectoryCoeffs& c) {
  require_dims(c.cx.size() == basis.coeff_count() && c.cy.size() == basis.coeff_count(),
               "eval_trajectory: coefficient length " + std::to_string(c.cx.size()) + "/" +
                   std::to_string(c.cy.size()) + " does not match basis (" +
                   std::to_string(basis.coeff_count()) + ")");
  return {basis.W * c.cx,  basis.W * c.cy,  basis.W1 * c.cx,
          basis.W1 * c.cy, basis.W2 * c.cx, basis.W2 * c.cy};
}

inline StateSequence eval_trajectory(const BasisSet& basis, const Vec& xi) {
  return eval_trajectory(basis, TrajectoryCoeffs::from_stacked(xi));
}

}  // namespace uapbev
