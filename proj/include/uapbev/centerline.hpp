#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "uapbev/common.hpp"
#include "uapbev/trajectory_basis.hpp"

namespace uapbev {

struct FrenetPoint {
  double s = 0.0;
  double d = 0.0;
};

// Reference line as a polyline with cumulative arc length per vertex.
class Centerline {
 public:
  Centerline() = default;

  // Arc length is the cumulative chord length of the polyline.
  explicit Centerline(std::vector<Vec2> points, double half_width = 1.75,
                      double max_spacing = 5.0)
      : points_(std::move(points)), half_width_(half_width) {
    require(points_.size() >= 2, "centerline needs at least two points");
    s_.resize(points_.size());
    s_[0] = 0.0;
    for (std::size_t i = 1; i < points_.size(); ++i) {
      const double len = (points_[i] - points_[i - 1]).norm();
      require(len > 0.0, "centerline: arc length must be strictly increasing");
      require(len <= max_spacing, "centerline: point spacing " + std::to_string(len) +
                                      " exceeds max spacing " + std::to_string(max_spacing));
      s_[i] = s_[i - 1] + len;
    }
  }

  static Centerline straight(double length, double spacing = 1.0, double half_width = 1.75) {
    require(length > 0.0 && spacing > 0.0, "straight centerline: length and spacing must be positive");
    const int count = static_cast<int>(std::ceil(length / spacing));
    std::vector<Vec2> pts;
    pts.reserve(count + 1);
    for (int i = 0; i <= count; ++i) pts.emplace_back(std::min(i * spacing, length), 0.0);
    return Centerline(std::move(pts), half_width, spacing + 1e-9);
  }

  // Plain-text table: one "x y" pair per line. Blank lines and '#' comments
  // are skipped.
  static Centerline load(const std::string& path, double half_width, double max_spacing = 5.0) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open centerline file: " + path);
    std::vector<Vec2> pts;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      std::istringstream ls(line);
      double x = 0.0, y = 0.0;
      if (!(ls >> x)) continue;
      if (!(ls >> y)) {
        throw ConfigError(path + ":" + std::to_string(line_no) + ": expected 'x y'");
      }
      pts.emplace_back(x, y);
    }
    return Centerline(std::move(pts), half_width, max_spacing);
  }

  const std::vector<Vec2>& points() const { return points_; }
  const std::vector<double>& arc_lengths() const { return s_; }
  double length() const { return s_.back(); }
  double half_width() const { return half_width_; }

  // Segment index i such that s_[i] <= s <= s_[i+1].
  std::size_t segment_at(double s) const {
    if (s < -kRangeTol || s > length() + kRangeTol) {
      throw Error("arc length " + std::to_string(s) + " outside centerline range [0, " +
                  std::to_string(length()) + "]");
    }
    const auto it = std::upper_bound(s_.begin(), s_.end(), s);
    std::size_t i = it == s_.begin() ? 0 : static_cast<std::size_t>(it - s_.begin()) - 1;
    return std::min(i, s_.size() - 2);
  }

  Vec2 point_at(double s) const {
    const std::size_t i = segment_at(s);
    const double t = (s - s_[i]) / (s_[i + 1] - s_[i]);
    return points_[i] + t * (points_[i + 1] - points_[i]);
  }

  Vec2 tangent_at(double s) const {
    const std::size_t i = segment_at(s);
    return (points_[i + 1] - points_[i]).normalized();
  }

  // Left unit normal.
  Vec2 normal_at(double s) const {
    const Vec2 t = tangent_at(s);
    return {-t.y(), t.x()};
  }

  Vec2 to_cartesian(const FrenetPoint& f) const { return point_at(f.s) + f.d * normal_at(f.s); }

  // Like to_cartesian, but continues the first/last segment straight for s
  // outside [0, length].
  Vec2 to_cartesian_extended(const FrenetPoint& f) const {
    const double s = std::clamp(f.s, 0.0, length());
    const Vec2 t = tangent_at(s);
    return point_at(s) + (f.s - s) * t + f.d * Vec2(-t.y(), t.x());
  }

 private:
  static constexpr double kRangeTol = 1e-9;
  std::vector<Vec2> points_;
  std::vector<double> s_;
  double half_width_ = 1.75;
};

// Positions map through p = r(s) + d * n(s); derivatives are rotated by the
// local tangent frame only.
inline StateSequence frenet_to_cartesian(const Centerline& line, const StateSequence& f) {
  const Eigen::Index n = f.size();
  StateSequence out = StateSequence::zeros(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const Vec2 t = line.tangent_at(f.x[k]);
    const Vec2 nrm(-t.y(), t.x());
    const Vec2 p = line.point_at(f.x[k]) + f.y[k] * nrm;
    const Vec2 v = f.vx[k] * t + f.vy[k] * nrm;
    const Vec2 a = f.ax[k] * t + f.ay[k] * nrm;
    out.x[k] = p.x();
    out.y[k] = p.y();
    out.vx[k] = v.x();
    out.vy[k] = v.y();
    out.ax[k] = a.x();
    out.ay[k] = a.y();
  }
  return out;
}

class AmbiguousProjection : public Error {
 public:
  using Error::Error;
};

inline FrenetPoint cartesian_to_frenet(const Centerline& line, const Vec2& p) {
  const auto& pts = line.points();
  const auto& s = line.arc_lengths();
  constexpr double kTieTol = 1e-9;
  const std::size_t segs = pts.size() - 1;
  std::vector<double> dist(segs), foot_s(segs);
  std::size_t best_i = 0;
  double best_t = 0.0;
  for (std::size_t i = 0; i < segs; ++i) {
    const Vec2 seg = pts[i + 1] - pts[i];
    const double t = std::clamp((p - pts[i]).dot(seg) / seg.squaredNorm(), 0.0, 1.0);
    dist[i] = (p - (pts[i] + t * seg)).norm();
    foot_s[i] = s[i] + t * (s[i + 1] - s[i]);
    if (dist[i] < dist[best_i]) {
      best_i = i;
      best_t = t;
    } else if (i == 0) {
      best_t = t;
    }
  }
  const double best = dist[best_i];
  for (std::size_t i = 0; i < segs; ++i) {
    if (dist[i] - best > kTieTol || std::abs(foot_s[i] - foot_s[best_i]) <= kTieTol) continue;
    // Ties with a different foot point are ambiguous unless they are the
    // shared vertex region of neighboring segments.
    const bool adjacent = i + 1 == best_i || best_i + 1 == i;
    if (!adjacent) {
      throw AmbiguousProjection("point (" + std::to_string(p.x()) + ", " + std::to_string(p.y()) +
                                ") projects equally onto arc lengths " + std::to_string(foot_s[best_i]) +
                                " and " + std::to_string(foot_s[i]));
    }
  }
  const Vec2 seg = pts[best_i + 1] - pts[best_i];
  const Vec2 foot = pts[best_i] + best_t * seg;
  const double cross = seg.x() * (p.y() - foot.y()) - seg.y() * (p.x() - foot.x());
  const double sign = cross >= 0.0 ? 1.0 : -1.0;
  return {foot_s[best_i], sign * best};
}

inline std::vector<FrenetPoint> cartesian_to_frenet(const Centerline& line,
                                                    const std::vector<Vec2>& points) {
  std::vector<FrenetPoint> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(cartesian_to_frenet(line, p));
  return out;
}

}  // namespace uapbev
