#pragma once

// Solvable start/goal tasks sampled on a map.

#include <string>
#include <vector>

#include "navlab/random.hpp"
#include "navlab/time_field.hpp"
#include "navlab/world.hpp"

namespace navlab {

struct EpisodeGenOptions {
  double min_geodesic = 2.0;
  double max_geodesic = 8.0;
  /// Extra clearance beyond the robot radius required at start and goal and
  /// along some route between them.
  double clearance_margin = 0.1;
  double success_radius = 0.2;
  double time_limit = 120.0;
  int max_attempts = 10000;
};

/// Samples `count` episodes whose goal is reachable from the start on the
/// robot's configuration space (checked with Fast Marching), with a route that
/// keeps the clearance margin.
inline std::vector<Episode> generate_episodes(const WorldMap& map, int count, std::uint64_t seed,
                                              const EpisodeGenOptions& opt = {}) {
  Rng rng = make_rng(seed, {11});
  const OccupancyGrid& grid = map.grid();
  const Raster<double> clearance = wall_distance(grid);
  const double need = map.robot_radius() + opt.clearance_margin;
  std::vector<CellIndex> candidates;
  for (int j = 0; j < grid.height(); ++j)
    for (int i = 0; i < grid.width(); ++i)
      if (!grid.occupied(i, j) && clearance.at(i, j) >= need) candidates.push_back({i, j});
  if (candidates.size() < 2) throw InfeasibleError("map " + map.id() + " has no room for episodes");

  std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
  std::uniform_real_distribution<double> heading(-kPi, kPi);
  std::vector<Episode> out;
  int attempts = 0;
  while (static_cast<int>(out.size()) < count) {
    if (++attempts > opt.max_attempts) throw InfeasibleError("could not sample enough solvable episodes");
    const CellIndex gc = candidates[pick(rng)];
    const Vec2 goal = grid.geometry().center(gc.i, gc.j);
    const CellIndex sc = candidates[pick(rng)];
    const Vec2 start = grid.geometry().center(sc.i, sc.j);
    const TimeField geo = solve_geodesic(grid, goal, map.robot_radius());
    const double d = geo.value_at(start);
    if (!std::isfinite(d) || d < opt.min_geodesic || d > opt.max_geodesic) continue;
    if (opt.clearance_margin > 0.0 &&
        !solve_geodesic(grid, goal, map.robot_radius() + opt.clearance_margin).reachable(start))
      continue;
    Episode ep;
    ep.id = map.id() + "/" + std::to_string(out.size());
    ep.map_id = map.id();
    ep.start = {start.x, start.y, heading(rng)};
    const Pose2 local = to_frame(ep.start, Pose2{goal.x, goal.y, 0.0});
    ep.goal = PolarGoal::from_cartesian(local.position());
    ep.success_radius = opt.success_radius;
    ep.time_limit = opt.time_limit;
    out.push_back(ep);
  }
  return out;
}

}  // namespace navlab
