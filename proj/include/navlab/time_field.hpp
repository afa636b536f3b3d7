#pragma once

// First-order Fast Marching solution of |grad T| * speed = 1 on an occupancy grid.
// The speed field is the wall-slowdown form speed = V * min(1, d / K) with d the
// distance to the nearest wall, or uniform V.

#include <cmath>
#include <limits>
#include <queue>
#include <utility>
#include <vector>

#include "navlab/grid.hpp"

namespace navlab {

struct SpeedFieldOptions {
  double v_max = 1.0;
  /// K: distance to wall (m) at which the speed reaches v_max.
  double wall_slowdown = 0.5;
  bool uniform = false;
  /// Cells closer than this to a wall are not traversable (robot footprint).
  double inflation_radius = 0.0;
};

struct TimeField {
  static constexpr double kUnreachable = std::numeric_limits<double>::infinity();

  Raster<double> time;
  Raster<double> speed;
  Raster<Vec2> gradient;
  Vec2 goal{};
  SpeedFieldOptions options{};

  const GridGeometry& geometry() const { return time.geometry; }

  double cell_value(int i, int j) const {
    if (!geometry().in_bounds(i, j)) return kUnreachable;
    return time.at(i, j);
  }

  bool reachable(Vec2 p) const { return std::isfinite(value_at(p)); }

  /// Bilinear interpolation between cell centers. Infinite if the cell
  /// containing p is unreachable; unreachable corners borrow that cell's value
  /// plus one cell traversal at full speed.
  double value_at(Vec2 p) const {
    const GridGeometry& g = geometry();
    const CellIndex own = g.cell_of(p);
    const double own_t = cell_value(own.i, own.j);
    if (!std::isfinite(own_t)) return kUnreachable;
    const double fx = (p.x - g.origin.x) / g.resolution - 0.5;
    const double fy = (p.y - g.origin.y) / g.resolution - 0.5;
    const int i0 = static_cast<int>(std::floor(fx)), j0 = static_cast<int>(std::floor(fy));
    const double tx = fx - i0, ty = fy - j0;
    const double fallback = own_t + g.resolution / options.v_max;
    auto corner = [&](int i, int j) {
      const double t = cell_value(i, j);
      return std::isfinite(t) ? t : fallback;
    };
    return (1 - tx) * (1 - ty) * corner(i0, j0) + tx * (1 - ty) * corner(i0 + 1, j0) +
           (1 - tx) * ty * corner(i0, j0 + 1) + tx * ty * corner(i0 + 1, j0 + 1);
  }

  /// Bilinear interpolation of the cell gradients over reachable corners.
  Vec2 gradient_at(Vec2 p) const {
    const GridGeometry& g = geometry();
    const double fx = (p.x - g.origin.x) / g.resolution - 0.5;
    const double fy = (p.y - g.origin.y) / g.resolution - 0.5;
    const int i0 = static_cast<int>(std::floor(fx)), j0 = static_cast<int>(std::floor(fy));
    const double tx = fx - i0, ty = fy - j0;
    Vec2 acc{};
    double wsum = 0.0;
    const int di[4] = {0, 1, 0, 1}, dj[4] = {0, 0, 1, 1};
    const double w[4] = {(1 - tx) * (1 - ty), tx * (1 - ty), (1 - tx) * ty, tx * ty};
    for (int k = 0; k < 4; ++k) {
      const int i = i0 + di[k], j = j0 + dj[k];
      if (!std::isfinite(cell_value(i, j))) continue;
      acc = acc + w[k] * gradient.at(i, j);
      wsum += w[k];
    }
    if (wsum <= 0.0) return {};
    return (1.0 / wsum) * acc;
  }
};

/// Per-cell speed (m/s); zero where the cell is not traversable.
inline Raster<double> speed_field(const OccupancyGrid& grid, const SpeedFieldOptions& opt) {
  const Raster<double> wall = wall_distance(grid);
  Raster<double> speed(grid.geometry(), 0.0);
  for (int j = 0; j < grid.height(); ++j)
    for (int i = 0; i < grid.width(); ++i) {
      if (grid.occupied(i, j)) continue;
      const double d = wall.at(i, j);
      if (d < opt.inflation_radius) continue;
      speed.at(i, j) = opt.uniform ? opt.v_max : opt.v_max * std::min(1.0, d / opt.wall_slowdown);
    }
  return speed;
}

namespace detail {

inline Raster<Vec2> central_gradient(const Raster<double>& t) {
  Raster<Vec2> grad(t.geometry, Vec2{});
  const GridGeometry& g = t.geometry;
  auto value = [&](int i, int j) {
    return g.in_bounds(i, j) ? t.at(i, j) : std::numeric_limits<double>::infinity();
  };
  auto axis = [&](double lo, double mid, double hi) {
    const bool l = std::isfinite(lo), h = std::isfinite(hi);
    if (l && h) return (hi - lo) / (2.0 * g.resolution);
    if (h) return (hi - mid) / g.resolution;
    if (l) return (mid - lo) / g.resolution;
    return 0.0;
  };
  for (int j = 0; j < g.height; ++j)
    for (int i = 0; i < g.width; ++i) {
      const double mid = t.at(i, j);
      if (!std::isfinite(mid)) continue;
      grad.at(i, j) = {axis(value(i - 1, j), mid, value(i + 1, j)),
                       axis(value(i, j - 1), mid, value(i, j + 1))};
    }
  return grad;
}

}  // namespace detail

/// Fast Marching from `goal` with the 4-neighbour first-order upwind update.
inline TimeField solve_time_field(const OccupancyGrid& grid, Vec2 goal, const SpeedFieldOptions& opt = {}) {
  if (!(opt.v_max > 0.0)) throw std::invalid_argument("solve_time_field: v_max must be > 0");
  if (!opt.uniform && !(opt.wall_slowdown > 0.0))
    throw std::invalid_argument("solve_time_field: wall slowdown K must be > 0");
  const GridGeometry& g = grid.geometry();
  TimeField field;
  field.goal = goal;
  field.options = opt;
  field.speed = speed_field(grid, opt);
  field.time = Raster<double>(g, TimeField::kUnreachable);

  const CellIndex gc = g.cell_of(goal);
  if (!g.in_bounds(gc.i, gc.j) || grid.occupied(gc.i, gc.j))
    throw InfeasibleError("goal lies in occupied space");
  if (field.speed.at(gc.i, gc.j) <= 0.0) throw InfeasibleError("goal lies too close to a wall");

  enum : std::uint8_t { kFar, kTrial, kKnown };
  std::vector<std::uint8_t> state(g.size(), kFar);
  using Entry = std::pair<double, std::size_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;

  auto t_at = [&](int i, int j) {
    if (!g.in_bounds(i, j) || state[g.linear(i, j)] != kKnown) return TimeField::kUnreachable;
    return field.time.at(i, j);
  };
  auto update = [&](int i, int j) {
    const double f = g.resolution / field.speed.at(i, j);
    const double a = std::min(t_at(i - 1, j), t_at(i + 1, j));
    const double b = std::min(t_at(i, j - 1), t_at(i, j + 1));
    if (std::abs(a - b) >= f || !std::isfinite(a) || !std::isfinite(b)) return std::min(a, b) + f;
    return 0.5 * (a + b + std::sqrt(2.0 * f * f - (a - b) * (a - b)));
  };

  field.time.at(gc.i, gc.j) = 0.0;
  state[g.linear(gc.i, gc.j)] = kTrial;
  heap.push({0.0, g.linear(gc.i, gc.j)});
  const int di[4] = {-1, 1, 0, 0}, dj[4] = {0, 0, -1, 1};
  while (!heap.empty()) {
    const auto [t, idx] = heap.top();
    heap.pop();
    if (state[idx] == kKnown || t > field.time.data[idx]) continue;
    state[idx] = kKnown;
    const int ci = static_cast<int>(idx % static_cast<std::size_t>(g.width));
    const int cj = static_cast<int>(idx / static_cast<std::size_t>(g.width));
    for (int k = 0; k < 4; ++k) {
      const int ni = ci + di[k], nj = cj + dj[k];
      if (!g.in_bounds(ni, nj)) continue;
      const std::size_t nidx = g.linear(ni, nj);
      if (state[nidx] == kKnown || field.speed.data[nidx] <= 0.0) continue;
      const double cand = update(ni, nj);
      if (cand < field.time.data[nidx]) {
        field.time.data[nidx] = cand;
        state[nidx] = kTrial;
        heap.push({cand, nidx});
      }
    }
  }
  field.gradient = detail::central_gradient(field.time);
  return field;
}

/// Uniform-speed field with unit speed on the robot's configuration space;
/// its values are geodesic distances in meters.
inline TimeField solve_geodesic(const OccupancyGrid& grid, Vec2 goal, double inflation_radius) {
  SpeedFieldOptions opt;
  opt.uniform = true;
  opt.v_max = 1.0;
  opt.inflation_radius = inflation_radius;
  return solve_time_field(grid, goal, opt);
}

/// Follows -grad T from `start` with steps of half a cell until within one cell
/// of the goal. Where a gradient step would not descend, steps to the lowest
/// neighbouring cell center instead. Empty if start is unreachable.
inline std::vector<Vec2> descend_path(const TimeField& field, Vec2 start, std::size_t max_points = 100000) {
  std::vector<Vec2> path;
  if (!field.reachable(start)) return path;
  const GridGeometry& g = field.geometry();
  const double step = 0.5 * g.resolution;
  Vec2 p = start;
  path.push_back(p);
  while (path.size() < max_points) {
    if ((p - field.goal).norm() <= g.resolution) {
      path.push_back(field.goal);
      return path;
    }
    const double here = field.value_at(p);
    const Vec2 grad = field.gradient_at(p);
    const double n = grad.norm();
    Vec2 next = p;
    if (n > 1e-12) next = p - (step / n) * grad;
    if (!(n > 1e-12) || !(field.value_at(next) < here)) {
      const CellIndex c = g.cell_of(p);
      double best = field.cell_value(c.i, c.j);
      CellIndex arg = c;
      for (int dj = -1; dj <= 1; ++dj)
        for (int di = -1; di <= 1; ++di) {
          const double t = field.cell_value(c.i + di, c.j + dj);
          if (t < best) {
            best = t;
            arg = {c.i + di, c.j + dj};
          }
        }
      if (arg == c) {
        next = g.center(c.i, c.j);
        if ((next - p).norm() < 1e-9) return {};
      } else {
        next = g.center(arg.i, arg.j);
      }
    }
    p = next;
    path.push_back(p);
  }
  return path;
}

/// Field value that tolerates points in cells excluded by inflation: falls
/// back to the best nearby reachable cell plus the straight-line distance to it
/// at full speed.
inline double robust_value(const TimeField& field, Vec2 p, int search = 3) {
  const double v = field.value_at(p);
  if (std::isfinite(v)) return v;
  const GridGeometry& g = field.geometry();
  const CellIndex c = g.cell_of(p);
  double best = TimeField::kUnreachable;
  for (int dj = -search; dj <= search; ++dj)
    for (int di = -search; di <= search; ++di) {
      const double t = field.cell_value(c.i + di, c.j + dj);
      if (!std::isfinite(t)) continue;
      best = std::min(best, t + (g.center(c.i + di, c.j + dj) - p).norm() / field.options.v_max);
    }
  return best;
}

/// Field view that stays finite next to walls. Points in cells excluded by
/// inflation take the value of the best nearby reachable cell plus the
/// straight-line time to it at that cell's speed and a fixed penalty, and a
/// gradient pointing away from that cell.
/// With a checker, only cells the disc can reach in a straight line count.
struct RobustFieldView {
  const TimeField* field = nullptr;
  const CollisionChecker* checker = nullptr;
  int search = 4;

  double value_at(Vec2 p) const {
    const double v = field->value_at(p);
    if (std::isfinite(v)) return v;
    return escape(p).first;
  }

  Vec2 gradient_at(Vec2 p) const {
    if (std::isfinite(field->value_at(p))) return field->gradient_at(p);
    const auto [best, target] = escape(p);
    if (!std::isfinite(best)) return {};
    const Vec2 d = p - target;
    const double n = d.norm();
    if (n < 1e-12) return {};
    return (1.0 / (n * field->options.v_max)) * d;
  }

  /// Added to escape values so that excluded cells always score worse than
  /// the reachable cells around them.
  double penalty() const { return 2.0 * (search + 1) * field->geometry().resolution / field->options.v_max; }

  std::pair<double, Vec2> escape(Vec2 p) const {
    const GridGeometry& g = field->geometry();
    const CellIndex c = g.cell_of(p);
    double best = TimeField::kUnreachable;
    Vec2 target = p;
    for (int dj = -search; dj <= search; ++dj)
      for (int di = -search; di <= search; ++di) {
        const double t = field->cell_value(c.i + di, c.j + dj);
        if (!std::isfinite(t)) continue;
        const Vec2 cc = g.center(c.i + di, c.j + dj);
        const double cand = t + (cc - p).norm() / field->speed.at(c.i + di, c.j + dj);
        if (cand >= best) continue;
        if (checker && checker->free_fraction(p, cc) < 1.0) continue;
        best = cand;
        target = cc;
      }
    if (!std::isfinite(best) && checker) return RobustFieldView{field, nullptr, search}.escape(p);
    return {best + penalty(), target};
  }
};

/// Lower bound on traversal time along the geodesic from `start`: geodesic
/// length at full speed plus heading changes at full turn rate. `geodesic` must
/// be a unit-speed field. Heading changes are measured on the descent path
/// resampled every `spacing` meters.
inline double optimal_traversal_time(const TimeField& geodesic, const Pose2& start, double v_max,
                                     double omega_max, double spacing = 0.5) {
  const std::vector<Vec2> path = descend_path(geodesic, start.position());
  if (path.size() < 2) return 0.0;
  std::vector<Vec2> resampled{path.front()};
  double since = 0.0;
  for (std::size_t k = 1; k < path.size(); ++k) {
    since += (path[k] - path[k - 1]).norm();
    if (since >= spacing || k + 1 == path.size()) {
      resampled.push_back(path[k]);
      since = 0.0;
    }
  }
  double turn = 0.0;
  double heading = start.theta;
  for (std::size_t k = 1; k < resampled.size(); ++k) {
    const Vec2 d = resampled[k] - resampled[k - 1];
    if (d.norm() < 1e-9) continue;
    const double h = std::atan2(d.y, d.x);
    turn += std::abs(wrap_angle(h - heading));
    heading = h;
  }
  return robust_value(geodesic, start.position()) / v_max + turn / omega_max;
}

}  // namespace navlab
