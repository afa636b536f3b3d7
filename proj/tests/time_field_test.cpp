#include <gtest/gtest.h>

#include <random>

#include "navlab/time_field.hpp"
#include "oracles.hpp"

namespace navlab {
namespace {

OccupancyGrid random_boxes(std::uint64_t seed, int n = 100, double res = 0.1) {
  std::mt19937_64 rng(seed);
  OccupancyGrid g(n, n, res);
  g.fill_border();
  std::uniform_real_distribution<double> pos(0.0, n * res), size(0.2, 1.5);
  for (int k = 0; k < 12; ++k) {
    const Vec2 lo{pos(rng), pos(rng)};
    g.fill_box(lo, {lo.x + size(rng), lo.y + size(rng)});
  }
  return g;
}

TEST(TimeField, GoalIsZero) {
  OccupancyGrid g(50, 50, 0.1);
  const TimeField f = solve_time_field(g, {2.55, 2.55});
  EXPECT_EQ(f.time.at(25, 25), 0.0);
}

TEST(TimeField, EmptyMapUniformSpeedIsEuclidean) {
  OccupancyGrid g(100, 100, 0.1);
  SpeedFieldOptions opt;
  opt.uniform = true;
  opt.v_max = 0.8;
  const Vec2 goal{0.05, 5.05};
  const TimeField f = solve_time_field(g, goal, opt);
  for (int i = 10; i < 100; i += 10) {
    const double L = (g.geometry().center(i, 50) - goal).norm();
    EXPECT_NEAR(f.time.at(i, 50), L / 0.8, 0.02 * L / 0.8);
  }
}

TEST(TimeField, NeverFasterThanEuclidean) {
  const OccupancyGrid g = random_boxes(3);
  const Vec2 goal = g.geometry().center(50, 50);
  OccupancyGrid gg = g;
  gg.set(50, 50, false);
  const TimeField f = solve_time_field(gg, goal);
  for (int j = 0; j < g.height(); ++j)
    for (int i = 0; i < g.width(); ++i) {
      const double t = f.time.at(i, j);
      if (std::isfinite(t)) {
        EXPECT_GE(t + 1e-12, (g.geometry().center(i, j) - goal).norm() / 1.0);
      }
    }
}

TEST(TimeField, RejectsOccupiedGoal) {
  OccupancyGrid g(20, 20, 0.1);
  g.fill_border();
  EXPECT_THROW(solve_time_field(g, {0.05, 0.05}), InfeasibleError);
  EXPECT_THROW(solve_time_field(g, {-1.0, 0.5}), InfeasibleError);
}

TEST(TimeField, WallSlowdownCapsAtFullSpeed) {
  OccupancyGrid g(40, 40, 0.1);
  g.fill_border();
  const Raster<double> s = speed_field(g, {});
  EXPECT_DOUBLE_EQ(s.at(20, 20), 1.0);
  EXPECT_NEAR(s.at(1, 20), 0.05 / 0.5, 1e-12);
  EXPECT_EQ(s.at(0, 20), 0.0);
}

TEST(TimeField, UnreachableRegionIsInfinite) {
  OccupancyGrid g(30, 30, 0.1);
  for (int j = 0; j < 30; ++j) g.set(15, j, true);
  const TimeField f = solve_time_field(g, {0.55, 1.55});
  EXPECT_TRUE(std::isinf(f.time.at(25, 10)));
  EXPECT_FALSE(f.reachable({2.55, 1.05}));
}

TEST(TimeField, CloseToDijkstraOracle) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    OccupancyGrid g = random_boxes(100 + seed);
    g.set(50, 50, false);
    const TimeField f = solve_time_field(g, g.geometry().center(50, 50));
    const auto dj = oracle::dijkstra(g.geometry(), f.speed.data, {50, 50});
    double rel_sum = 0.0, signed_excess = 0.0;
    int n = 0;
    for (std::size_t k = 0; k < dj.size(); ++k) {
      ASSERT_EQ(std::isfinite(dj[k]), std::isfinite(f.time.data[k]));
      if (!std::isfinite(dj[k]) || dj[k] < 1.0) continue;
      const double rel = (f.time.data[k] - dj[k]) / dj[k];
      EXPECT_LE(rel, 0.15);
      rel_sum += std::abs(rel);
      signed_excess += f.time.data[k] - dj[k];
      ++n;
    }
    EXPECT_LE(rel_sum / n, 0.05) << "seed " << seed;
    EXPECT_LE(signed_excess, 0.0) << "seed " << seed;
  }
}

TEST(TimeField, DescendPathReachesGoal) {
  OccupancyGrid g = random_boxes(9);
  g.fill_box({4.5, 4.5}, {5.5, 5.5}, false);
  const TimeField f = solve_geodesic(g, {5.0, 5.0}, 0.25);
  for (int j = 5; j < 95; j += 15)
    for (int i = 5; i < 95; i += 15) {
      const Vec2 s = g.geometry().center(i, j);
      if (!f.reachable(s)) continue;
      const auto path = descend_path(f, s);
      ASSERT_FALSE(path.empty());
      EXPECT_EQ(path.back(), f.goal);
      double len = 0.0;
      for (std::size_t k = 1; k < path.size(); ++k) len += (path[k] - path[k - 1]).norm();
      EXPECT_NEAR(len, f.value_at(s), 0.1 * f.value_at(s) + 0.2);
    }
}

}  // namespace
}  // namespace navlab
