#pragma once

// Occupancy grids, raster geometry, distance transforms and disc collision tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "navlab/core.hpp"

namespace navlab {

struct CellIndex {
  int i = 0;  // column, along +x
  int j = 0;  // row, along +y
  friend bool operator==(CellIndex, CellIndex) = default;
};

/// Placement of a cell raster in the world. `origin` is the world position of
/// the lower-left corner of cell (0,0).
struct GridGeometry {
  int width = 0;
  int height = 0;
  double resolution = 0.1;
  Vec2 origin{};

  std::size_t size() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }
  bool in_bounds(int i, int j) const { return i >= 0 && j >= 0 && i < width && j < height; }
  std::size_t linear(int i, int j) const {
    return static_cast<std::size_t>(j) * static_cast<std::size_t>(width) + static_cast<std::size_t>(i);
  }
  CellIndex cell_of(Vec2 p) const {
    return {static_cast<int>(std::floor((p.x - origin.x) / resolution)),
            static_cast<int>(std::floor((p.y - origin.y) / resolution))};
  }
  Vec2 center(int i, int j) const {
    return {origin.x + (i + 0.5) * resolution, origin.y + (j + 0.5) * resolution};
  }
  double world_width() const { return width * resolution; }
  double world_height() const { return height * resolution; }
  friend bool operator==(const GridGeometry&, const GridGeometry&) = default;
};

/// Dense scalar field over a GridGeometry.
template <class T>
struct Raster {
  GridGeometry geometry;
  std::vector<T> data;

  Raster() = default;
  Raster(const GridGeometry& g, T fill) : geometry(g), data(g.size(), fill) {}

  T& at(int i, int j) { return data[geometry.linear(i, j)]; }
  const T& at(int i, int j) const { return data[geometry.linear(i, j)]; }
  int width() const { return geometry.width; }
  int height() const { return geometry.height; }
};

class OccupancyGrid {
 public:
  OccupancyGrid() = default;
  OccupancyGrid(int width, int height, double resolution, Vec2 origin = {})
      : geometry_{width, height, resolution, origin}, cells_(geometry_.size(), 0) {
    if (width < 2 || height < 2) throw DataError("occupancy grid must be at least 2x2");
    if (!(resolution > 0.0) || !std::isfinite(resolution)) throw DataError("grid resolution must be > 0");
  }

  const GridGeometry& geometry() const { return geometry_; }
  int width() const { return geometry_.width; }
  int height() const { return geometry_.height; }
  double resolution() const { return geometry_.resolution; }
  Vec2 origin() const { return geometry_.origin; }

  /// Cells outside the grid report occupied.
  bool occupied(int i, int j) const {
    if (!geometry_.in_bounds(i, j)) return true;
    return cells_[geometry_.linear(i, j)] != 0;
  }
  bool occupied_at(Vec2 p) const {
    const CellIndex c = geometry_.cell_of(p);
    return occupied(c.i, c.j);
  }
  void set(int i, int j, bool occ) {
    if (!geometry_.in_bounds(i, j)) throw std::out_of_range("cell outside grid");
    cells_[geometry_.linear(i, j)] = occ ? 1 : 0;
  }
  /// Marks every cell whose center lies in the axis-aligned world box.
  void fill_box(Vec2 lo, Vec2 hi, bool occ = true) {
    for (int j = 0; j < height(); ++j)
      for (int i = 0; i < width(); ++i) {
        const Vec2 c = geometry_.center(i, j);
        if (c.x >= lo.x && c.x <= hi.x && c.y >= lo.y && c.y <= hi.y) set(i, j, occ);
      }
  }
  void fill_border() {
    for (int i = 0; i < width(); ++i) {
      set(i, 0, true);
      set(i, height() - 1, true);
    }
    for (int j = 0; j < height(); ++j) {
      set(0, j, true);
      set(width() - 1, j, true);
    }
  }
  std::size_t count_occupied() const {
    return static_cast<std::size_t>(std::count(cells_.begin(), cells_.end(), std::uint8_t{1}));
  }
  const std::vector<std::uint8_t>& cells() const { return cells_; }

  friend bool operator==(const OccupancyGrid&, const OccupancyGrid&) = default;

 private:
  GridGeometry geometry_{};
  std::vector<std::uint8_t> cells_;
};

namespace detail {

// 1D squared Euclidean distance transform (Felzenszwalb & Huttenlocher).
inline void edt_1d(const double* f, double* d, int n, std::vector<int>& v, std::vector<double>& z) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  v.assign(static_cast<std::size_t>(n), 0);
  z.assign(static_cast<std::size_t>(n) + 1, 0.0);
  int k = 0;
  // Skip leading infinities so the parabola intersection stays finite.
  int first = 0;
  while (first < n && !std::isfinite(f[first])) ++first;
  if (first == n) {
    for (int q = 0; q < n; ++q) d[q] = inf;
    return;
  }
  v[0] = first;
  z[0] = -inf;
  z[1] = inf;
  for (int q = first + 1; q < n; ++q) {
    if (!std::isfinite(f[q])) continue;
    double s;
    while (true) {
      const int p = v[static_cast<std::size_t>(k)];
      s = ((f[q] + double(q) * q) - (f[p] + double(p) * p)) / (2.0 * q - 2.0 * p);
      if (s <= z[static_cast<std::size_t>(k)] && k > 0) {
        --k;
        continue;
      }
      break;
    }
    ++k;
    v[static_cast<std::size_t>(k)] = q;
    z[static_cast<std::size_t>(k)] = s;
    z[static_cast<std::size_t>(k) + 1] = inf;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[static_cast<std::size_t>(k) + 1] < q) ++k;
    const int p = v[static_cast<std::size_t>(k)];
    d[q] = double(q - p) * (q - p) + f[p];
  }
}

}  // namespace detail

/// Distance in meters from each cell center to the nearest occupied cell
/// center. The ring of cells just outside the grid counts as occupied.
inline Raster<double> center_distance_transform(const OccupancyGrid& grid) {
  const int w = grid.width() + 2, h = grid.height() + 2;
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> f(static_cast<std::size_t>(w) * h, inf);
  for (int j = 0; j < h; ++j)
    for (int i = 0; i < w; ++i)
      if (grid.occupied(i - 1, j - 1)) f[static_cast<std::size_t>(j) * w + i] = 0.0;
  std::vector<double> col_in(static_cast<std::size_t>(h)), col_out(static_cast<std::size_t>(h));
  std::vector<double> row_out(static_cast<std::size_t>(w));
  std::vector<int> v;
  std::vector<double> z;
  for (int i = 0; i < w; ++i) {
    for (int j = 0; j < h; ++j) col_in[static_cast<std::size_t>(j)] = f[static_cast<std::size_t>(j) * w + i];
    detail::edt_1d(col_in.data(), col_out.data(), h, v, z);
    for (int j = 0; j < h; ++j) f[static_cast<std::size_t>(j) * w + i] = col_out[static_cast<std::size_t>(j)];
  }
  for (int j = 0; j < h; ++j) {
    detail::edt_1d(&f[static_cast<std::size_t>(j) * w], row_out.data(), w, v, z);
    std::copy(row_out.begin(), row_out.end(), f.begin() + static_cast<std::ptrdiff_t>(j) * w);
  }
  Raster<double> out(grid.geometry(), 0.0);
  for (int j = 0; j < grid.height(); ++j)
    for (int i = 0; i < grid.width(); ++i)
      out.at(i, j) = std::sqrt(f[static_cast<std::size_t>(j + 1) * w + (i + 1)]) * grid.resolution();
  return out;
}

/// Approximate distance from each free cell center to the nearest wall surface
/// (center distance minus half a cell); 0 on occupied cells.
inline Raster<double> wall_distance(const OccupancyGrid& grid) {
  Raster<double> d = center_distance_transform(grid);
  const double half = 0.5 * grid.resolution();
  for (double& x : d.data) x = std::max(0.0, x - half);
  return d;
}

/// Exact test: does a disc of radius r centred at p overlap any occupied cell?
inline bool disc_collides(const OccupancyGrid& grid, Vec2 p, double r) {
  const GridGeometry& g = grid.geometry();
  const CellIndex lo = g.cell_of({p.x - r, p.y - r});
  const CellIndex hi = g.cell_of({p.x + r, p.y + r});
  const double r2 = r * r;
  for (int j = lo.j; j <= hi.j; ++j)
    for (int i = lo.i; i <= hi.i; ++i) {
      if (!grid.occupied(i, j)) continue;
      const double x0 = g.origin.x + i * g.resolution, y0 = g.origin.y + j * g.resolution;
      const double cx = std::clamp(p.x, x0, x0 + g.resolution);
      const double cy = std::clamp(p.y, y0, y0 + g.resolution);
      const double dx = p.x - cx, dy = p.y - cy;
      if (dx * dx + dy * dy < r2) return true;
    }
  return false;
}

/// Disc collision with a clearance raster as a fast negative test.
class CollisionChecker {
 public:
  CollisionChecker(const OccupancyGrid& grid, double radius)
      : grid_(&grid), radius_(radius), clearance_(center_distance_transform(grid)) {}

  double radius() const { return radius_; }
  const OccupancyGrid& grid() const { return *grid_; }

  bool collides(Vec2 p) const {
    const GridGeometry& g = grid_->geometry();
    const CellIndex c = g.cell_of(p);
    if (g.in_bounds(c.i, c.j)) {
      // Nearest occupied center is >= clearance away from this cell center;
      // its surface is within half a diagonal of that center.
      const Vec2 cc = g.center(c.i, c.j);
      const double bound = clearance_.at(c.i, c.j) - (cc - p).norm() - g.resolution * std::sqrt(0.5);
      if (bound > radius_) return false;
    }
    return disc_collides(*grid_, p, radius_);
  }

  /// Swept test along a segment, sampled at a quarter cell. Returns the
  /// largest collision-free fraction in [0,1] (1 when the whole segment is free).
  double free_fraction(Vec2 a, Vec2 b) const {
    const double len = (b - a).norm();
    const int n = std::max(1, static_cast<int>(std::ceil(len / (0.25 * grid_->resolution()))));
    double last_free = 0.0;
    for (int k = 1; k <= n; ++k) {
      const double s = static_cast<double>(k) / n;
      if (collides(a + s * (b - a))) {
        // Refine between the last free sample and this one.
        double lo = last_free, hi = s;
        for (int it = 0; it < 30; ++it) {
          const double mid = 0.5 * (lo + hi);
          if (collides(a + mid * (b - a))) hi = mid;
          else lo = mid;
        }
        return lo;
      }
      last_free = s;
    }
    return 1.0;
  }

 private:
  const OccupancyGrid* grid_;
  double radius_;
  Raster<double> clearance_;
};

}  // namespace navlab
