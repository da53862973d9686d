#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "uapbev/common.hpp"
#include "uapbev/trajectory_basis.hpp"

namespace uapbev {

// Binary occupancy in an ego-centric frame. Cell (row i, col j) has its
// center at origin + (j * resolution, i * resolution): columns run along x,
// rows along y.
struct OccupancyGrid {
  int height = 0;
  int width = 0;
  double resolution = 0.2;
  Vec2 origin = Vec2::Zero();
  std::vector<std::uint8_t> cells;

  OccupancyGrid() = default;
  OccupancyGrid(int h, int w, double res, Vec2 org)
      : height(h), width(w), resolution(res), origin(std::move(org)) {
    require(h > 0 && w > 0, "occupancy grid dimensions must be positive");
    require(res > 0.0, "occupancy grid resolution must be positive");
    cells.assign(static_cast<std::size_t>(h) * w, 0);
  }

  std::size_t index(int i, int j) const { return static_cast<std::size_t>(i) * width + j; }
  bool occupied(int i, int j) const { return cells[index(i, j)] != 0; }
  void set(int i, int j, bool v = true) { cells[index(i, j)] = v ? 1 : 0; }
  bool in_bounds(int i, int j) const { return i >= 0 && i < height && j >= 0 && j < width; }
  Vec2 cell_center(int i, int j) const {
    return origin + Vec2(j * resolution, i * resolution);
  }
  bool same_geometry(const OccupancyGrid& o) const {
    return height == o.height && width == o.width && resolution == o.resolution &&
           origin == o.origin;
  }
  std::size_t occupied_count() const {
    return static_cast<std::size_t>(std::count(cells.begin(), cells.end(), std::uint8_t{1}));
  }
  bool operator==(const OccupancyGrid& o) const { return same_geometry(o) && cells == o.cells; }

  // Marks every cell whose center lies within `radius` of `center`.
  void rasterize_disc(const Vec2& center, double radius) {
    const Vec2 rel = (center - origin) / resolution;
    const double r_cells = radius / resolution;
    const int i0 = std::max(0, static_cast<int>(std::floor(rel.y() - r_cells)));
    const int i1 = std::min(height - 1, static_cast<int>(std::ceil(rel.y() + r_cells)));
    const int j0 = std::max(0, static_cast<int>(std::floor(rel.x() - r_cells)));
    const int j1 = std::min(width - 1, static_cast<int>(std::ceil(rel.x() + r_cells)));
    const double r2 = radius * radius;
    for (int i = i0; i <= i1; ++i) {
      for (int j = j0; j <= j1; ++j) {
        if ((cell_center(i, j) - center).squaredNorm() <= r2) set(i, j);
      }
    }
  }
};

// Exact Euclidean distance (meters) from every cell center to the nearest
// occupied cell center.
struct DistanceField {
  int height = 0;
  int width = 0;
  double resolution = 0.2;
  Vec2 origin = Vec2::Zero();
  std::vector<double> dist;
  bool empty_source = false;

  double at(int i, int j) const { return dist[static_cast<std::size_t>(i) * width + j]; }
  double sentinel() const { return resolution * (height + width); }
};

namespace detail {

// One-dimensional squared distance transform of sampled function f
// (lower envelope of parabolas).
inline void edt_1d(const double* f, int n, double* out, std::vector<int>& v,
                   std::vector<double>& z) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  v.assign(n, 0);
  z.assign(n + 1, 0.0);
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (!std::isfinite(f[q])) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -kInf;
      z[1] = kInf;
      continue;
    }
    double s = 0.0;
    while (true) {
      const int p = v[k];
      s = ((f[q] + double(q) * q) - (f[p] + double(p) * p)) / (2.0 * (q - p));
      if (s <= z[k] && k > 0) {
        --k;
      } else {
        break;
      }
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  if (k < 0) {
    std::fill(out, out + n, kInf);
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (z[j + 1] < q) ++j;
    const double d = q - v[j];
    out[q] = d * d + f[v[j]];
  }
}

}  // namespace detail

// Separable two-pass exact EDT: columns, then rows, in cell units.
inline DistanceField build_distance_field(const OccupancyGrid& grid) {
  DistanceField field;
  field.height = grid.height;
  field.width = grid.width;
  field.resolution = grid.resolution;
  field.origin = grid.origin;
  const int H = grid.height, W = grid.width;
  field.dist.assign(static_cast<std::size_t>(H) * W, 0.0);

  if (grid.occupied_count() == 0) {
    field.empty_source = true;
    std::fill(field.dist.begin(), field.dist.end(), field.sentinel());
    return field;
  }

  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> sq(static_cast<std::size_t>(H) * W);
  for (std::size_t c = 0; c < sq.size(); ++c) sq[c] = grid.cells[c] ? 0.0 : kInf;

  std::vector<int> v;
  std::vector<double> z;
  std::vector<double> col_in(H), col_out(H);
  for (int j = 0; j < W; ++j) {
    for (int i = 0; i < H; ++i) col_in[i] = sq[static_cast<std::size_t>(i) * W + j];
    detail::edt_1d(col_in.data(), H, col_out.data(), v, z);
    for (int i = 0; i < H; ++i) sq[static_cast<std::size_t>(i) * W + j] = col_out[i];
  }
  std::vector<double> row_out(W);
  for (int i = 0; i < H; ++i) {
    double* row = sq.data() + static_cast<std::size_t>(i) * W;
    detail::edt_1d(row, W, row_out.data(), v, z);
    for (int j = 0; j < W; ++j) {
      field.dist[static_cast<std::size_t>(i) * W + j] = std::sqrt(row_out[j]) * grid.resolution;
    }
  }
  return field;
}

struct DistanceQuery {
  double distance = 0.0;
  bool clamped = false;  // point fell outside the grid and was clamped to it
};

// Bilinear interpolation between the four surrounding cell centers.
inline DistanceQuery query_distance(const DistanceField& field, const Vec2& point) {
  double fx = (point.x() - field.origin.x()) / field.resolution;
  double fy = (point.y() - field.origin.y()) / field.resolution;
  DistanceQuery q;
  const double max_x = field.width - 1;
  const double max_y = field.height - 1;
  if (!(fx >= 0.0 && fx <= max_x && fy >= 0.0 && fy <= max_y)) {
    q.clamped = true;
    fx = std::clamp(std::isfinite(fx) ? fx : 0.0, 0.0, max_x);
    fy = std::clamp(std::isfinite(fy) ? fy : 0.0, 0.0, max_y);
  }
  const int j0 = std::min(static_cast<int>(std::floor(fx)), std::max(field.width - 2, 0));
  const int i0 = std::min(static_cast<int>(std::floor(fy)), std::max(field.height - 2, 0));
  const int j1 = std::min(j0 + 1, field.width - 1);
  const int i1 = std::min(i0 + 1, field.height - 1);
  const double tx = fx - j0;
  const double ty = fy - i0;
  const double top = (1.0 - tx) * field.at(i0, j0) + tx * field.at(i0, j1);
  const double bot = (1.0 - tx) * field.at(i1, j0) + tx * field.at(i1, j1);
  q.distance = (1.0 - ty) * top + ty * bot;
  return q;
}

// Ordered predicted frames k_0..k_F sharing one geometry.
struct GridSequence {
  std::vector<OccupancyGrid> frames;
  double frame_period = 0.5;  // seconds between predicted frames

  int frame_count() const { return static_cast<int>(frames.size()); }
};

// Planner step -> nearest predicted frame in time; steps beyond the
// prediction horizon hold the last frame.
struct FrameMapping {
  double planner_dt = 0.1;
  double frame_period = 0.5;
  int frame_count = 1;

  int operator()(int k) const {
    const long idx = std::lround(k * planner_dt / frame_period);
    return static_cast<int>(std::clamp<long>(idx, 0, frame_count - 1));
  }
};

// Distance fields for every frame, built once per planning cycle.
struct DistanceFieldSequence {
  std::vector<DistanceField> fields;
  double frame_period = 0.5;

  static DistanceFieldSequence build(const GridSequence& grids) {
    require(!grids.frames.empty(), "grid sequence is empty");
    const auto& g0 = grids.frames.front();
    DistanceFieldSequence out;
    out.frame_period = grids.frame_period;
    out.fields.reserve(grids.frames.size());
    for (const auto& g : grids.frames) {
      require(g.same_geometry(g0), "grid sequence frames must share geometry");
      out.fields.push_back(build_distance_field(g));
    }
    return out;
  }

  FrameMapping mapping(double planner_dt) const {
    return {planner_dt, frame_period, static_cast<int>(fields.size())};
  }
};

struct TrajectoryDistances {
  Vec d;
  std::vector<int> frame;    // frame used per step
  int clamped_count = 0;
};

// `positions` are ego-centric (x, y) per planner step.
inline TrajectoryDistances trajectory_distances(const DistanceFieldSequence& seq,
                                                const Vec& xs, const Vec& ys,
                                                double planner_dt) {
  require(!seq.fields.empty(), "trajectory_distances: empty grid sequence");
  require_dims(xs.size() == ys.size(), "trajectory_distances: x/y length mismatch");
  const FrameMapping phi = seq.mapping(planner_dt);
  TrajectoryDistances out;
  out.d.resize(xs.size());
  out.frame.resize(xs.size());
  for (Eigen::Index k = 0; k < xs.size(); ++k) {
    const int f = phi(static_cast<int>(k));
    const auto q = query_distance(seq.fields[f], Vec2(xs[k], ys[k]));
    out.d[k] = q.distance;
    out.frame[k] = f;
    out.clamped_count += q.clamped ? 1 : 0;
  }
  return out;
}

inline TrajectoryDistances trajectory_distances(const GridSequence& grids,
                                                const StateSequence& traj, double planner_dt) {
  require(!grids.frames.empty(), "trajectory_distances: empty grid sequence");
  return trajectory_distances(DistanceFieldSequence::build(grids), traj.x, traj.y, planner_dt);
}

// ---- serialization -------------------------------------------------------
// Header: "UAPGRID1 <height> <width> <resolution> <origin_x> <origin_y>",
// then `height` lines of `width` ASCII '0'/'1' characters, row 0 first.

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline void write_grid(std::ostream& out, const OccupancyGrid& g) {
  out << "UAPGRID1 " << g.height << ' ' << g.width << ' ' << format_double(g.resolution) << ' '
      << format_double(g.origin.x()) << ' ' << format_double(g.origin.y()) << '\n';
  std::string row(static_cast<std::size_t>(g.width), '0');
  for (int i = 0; i < g.height; ++i) {
    for (int j = 0; j < g.width; ++j) row[j] = g.occupied(i, j) ? '1' : '0';
    out << row << '\n';
  }
}

inline double parse_double(const std::string& tok, const std::string& what) {
  double v = 0.0;
  auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
    throw ConfigError("cannot parse " + what + ": '" + tok + "'");
  }
  return v;
}

inline OccupancyGrid read_grid(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) throw ConfigError("grid: missing header");
  std::istringstream hs(header);
  std::string magic, h, w, res, ox, oy;
  hs >> magic >> h >> w >> res >> ox >> oy;
  if (magic != "UAPGRID1") throw ConfigError("grid: bad magic '" + magic + "'");
  const int H = static_cast<int>(parse_double(h, "grid height"));
  const int W = static_cast<int>(parse_double(w, "grid width"));
  OccupancyGrid g(H, W, parse_double(res, "grid resolution"),
                  Vec2(parse_double(ox, "grid origin x"), parse_double(oy, "grid origin y")));
  std::string line;
  for (int i = 0; i < H; ++i) {
    if (!std::getline(in, line) || static_cast<int>(line.size()) != W) {
      throw ConfigError("grid: row " + std::to_string(i) + " missing or wrong length");
    }
    for (int j = 0; j < W; ++j) {
      if (line[j] != '0' && line[j] != '1') {
        throw ConfigError("grid: invalid cell character in row " + std::to_string(i));
      }
      g.set(i, j, line[j] == '1');
    }
  }
  return g;
}

}  // namespace uapbev
