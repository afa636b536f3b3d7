#pragma once

// Range scanner model: equiangular rays traced through the occupancy grid.

#include <cmath>
#include <utility>
#include <vector>

#include "navlab/grid.hpp"

namespace navlab {

struct ScanConfig {
  int num_rays = 128;
  double range_max = 5.0;
  /// Angular sectors [lo, hi] (radians, robot frame, lo <= hi) reported as range_max.
  std::vector<std::pair<double, double>> dead_zones;
};

/// Bearing of ray k in the robot frame, in (-pi, pi]. Ray 0 points forward.
inline double ray_bearing(int k, int num_rays) { return wrap_angle(2.0 * kPi * k / num_rays); }

inline bool in_dead_zone(double bearing, const ScanConfig& cfg) {
  for (const auto& [lo, hi] : cfg.dead_zones) {
    // Sectors may straddle +-pi.
    const double rel = wrap_angle(bearing - lo);
    const double width = hi - lo;
    if (rel >= -1e-12 && rel <= width + 1e-12) return true;
  }
  return false;
}

/// Blind sectors left by `count` identical depth sensors spaced evenly around
/// the robot, the first facing forward, each covering `fov` radians.
inline std::vector<std::pair<double, double>> sensor_gap_dead_zones(int count = 4, double fov = 65.0 * kPi / 180.0) {
  if (count < 1 || !(fov > 0.0)) throw std::invalid_argument("sensor gaps need count >= 1 and fov > 0");
  const double spacing = 2.0 * kPi / count, gap = spacing - fov;
  std::vector<std::pair<double, double>> out;
  if (gap <= 0.0) return out;
  for (int k = 0; k < count; ++k) {
    const double center = wrap_angle((k + 0.5) * spacing);
    out.push_back({center - 0.5 * gap, center + 0.5 * gap});
  }
  return out;
}

/// Distance along a ray to the first occupied cell (Amanatides-Woo traversal),
/// clipped to `range_max`.
inline double cast_ray(const OccupancyGrid& grid, Vec2 origin, double angle, double range_max) {
  const GridGeometry& g = grid.geometry();
  const double dx = std::cos(angle), dy = std::sin(angle);
  CellIndex c = g.cell_of(origin);
  if (grid.occupied(c.i, c.j)) return 0.0;
  const int step_i = dx > 0 ? 1 : -1, step_j = dy > 0 ? 1 : -1;
  constexpr double inf = std::numeric_limits<double>::infinity();
  const double x0 = g.origin.x + c.i * g.resolution, y0 = g.origin.y + c.j * g.resolution;
  double t_max_x = dx == 0.0 ? inf : ((dx > 0 ? x0 + g.resolution : x0) - origin.x) / dx;
  double t_max_y = dy == 0.0 ? inf : ((dy > 0 ? y0 + g.resolution : y0) - origin.y) / dy;
  const double t_delta_x = dx == 0.0 ? inf : g.resolution / std::abs(dx);
  const double t_delta_y = dy == 0.0 ? inf : g.resolution / std::abs(dy);
  while (true) {
    double t;
    if (t_max_x < t_max_y) {
      t = t_max_x;
      t_max_x += t_delta_x;
      c.i += step_i;
    } else {
      t = t_max_y;
      t_max_y += t_delta_y;
      c.j += step_j;
    }
    if (t >= range_max) return range_max;
    if (grid.occupied(c.i, c.j)) return t;
  }
}

/// K equiangular ranges around `pose`; dead-zone rays report range_max.
inline std::vector<double> raycast_scan(const OccupancyGrid& grid, const Pose2& pose, const ScanConfig& cfg) {
  if (cfg.num_rays <= 0) throw std::invalid_argument("scan needs at least one ray");
  if (grid.occupied_at(pose.position())) throw DataError("scan origin lies in an occupied cell");
  std::vector<double> out(static_cast<std::size_t>(cfg.num_rays));
  for (int k = 0; k < cfg.num_rays; ++k) {
    const double bearing = ray_bearing(k, cfg.num_rays);
    out[static_cast<std::size_t>(k)] = in_dead_zone(bearing, cfg)
                                           ? cfg.range_max
                                           : cast_ray(grid, pose.position(), pose.theta + bearing, cfg.range_max);
  }
  return out;
}

}  // namespace navlab
