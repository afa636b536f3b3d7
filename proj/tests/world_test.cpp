#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <queue>

#include "navlab/episodes.hpp"
#include "navlab/maps.hpp"
#include "navlab/planner.hpp"
#include "navlab/world.hpp"

namespace navlab {
namespace {

class ConstantPolicy : public Policy {
 public:
  explicit ConstantPolicy(int action) : action_(action) {}
  int act(const PolicyInput&) override { return action_; }

 private:
  int action_;
};

/// Plays a fixed list of actions, then STOP.
class ScriptPolicy : public Policy {
 public:
  explicit ScriptPolicy(std::vector<int> script) : script_(std::move(script)) {}
  int act(const PolicyInput&) override { return k_ < script_.size() ? script_[k_++] : kStopIndex; }

 private:
  std::vector<int> script_;
  std::size_t k_ = 0;
};

std::shared_ptr<const WorldMap> open_room(double size = 10.0) {
  OccupancyGrid g(static_cast<int>(size / 0.1), static_cast<int>(size / 0.1), 0.1);
  g.fill_border();
  return make_world_map("open", std::move(g));
}

Episode episode_at(Pose2 start, Vec2 goal_world, double time_limit = 120.0) {
  Episode ep;
  ep.id = "e";
  ep.map_id = "open";
  ep.start = start;
  ep.goal = PolarGoal::from_cartesian(to_frame(start, Pose2{goal_world.x, goal_world.y, 0}).position());
  ep.time_limit = time_limit;
  return ep;
}

int forward_full(const DynParams& p) {
  for (const Command& c : action_space(p))
    if (c.a_v == p.v_max && c.a_omega == 0.0) return c.index;
  return -1;
}

TEST(Engine, StopInsideRadiusAtRestIsSuccess) {
  auto map = open_room();
  Engine e(map, episode_at({5, 5, 0}, {5.1, 5.0}), WorldConfig{}, 1);
  const StepResult r = e.step(kStopIndex);
  EXPECT_TRUE(r.done);
  EXPECT_EQ(e.outcome(), Outcome::success);
  EXPECT_NEAR(r.reward, 2.5 - 0.01, 1e-12);
}

TEST(Engine, StopFarAwayEndsAsStoppedFar) {
  auto map = open_room();
  Engine e(map, episode_at({5, 5, 0}, {7, 5}), WorldConfig{}, 1);
  e.step(kStopIndex);
  EXPECT_EQ(e.outcome(), Outcome::stopped_far);
}

TEST(Engine, StopWhileMovingDoesNotEndEpisode) {
  auto map = open_room();
  WorldConfig cfg;
  Engine e(map, episode_at({3, 5, 0}, {7, 5}), cfg, 1);
  const int fwd = forward_full(cfg.dynamics);
  for (int k = 0; k < 6; ++k) e.step(fwd);
  ASSERT_GT(e.state().v, 0.5);
  e.step(kStopIndex);
  EXPECT_FALSE(e.done());
}

TEST(Engine, DrivingIntoNearbyWallCollides) {
  // Wall face at x = 9.9; disc edge starts 0.1 m away.
  auto map = open_room();
  WorldConfig cfg;
  cfg.mode = DynamicsMode::instant;
  Engine e(map, episode_at({9.55, 5, 0}, {5, 5}), cfg, 1);
  const double geo0 = e.geodesic_distance();
  const StepResult r = e.step(forward_full(cfg.dynamics));
  EXPECT_TRUE(r.collision);
  EXPECT_NEAR(e.state().x, 9.65, 0.01);
  EXPECT_EQ(e.state().v, 0.0);
  // r = -(geo increase) - slack - collision
  EXPECT_NEAR(r.reward, (geo0 - e.geodesic_distance()) - 0.01 - 0.1, 1e-12);
  EXPECT_LT(r.reward, -0.1);
}

TEST(Engine, ZeroCommandInOpenSpace) {
  auto map = open_room();
  Engine e(map, episode_at({5, 5, 0}, {8, 5}), WorldConfig{}, 1);
  const StepResult r = e.step(kIdleIndex);
  EXPECT_EQ(r.geo_delta, 0.0);
  EXPECT_DOUBLE_EQ(r.reward, -0.01);
}

TEST(Engine, StepAfterDoneThrows) {
  auto map = open_room();
  Engine e(map, episode_at({5, 5, 0}, {5.05, 5}), WorldConfig{}, 1);
  e.step(kStopIndex);
  EXPECT_THROW(e.step(kIdleIndex), std::logic_error);
}

TEST(Engine, TimeoutAtLimit) {
  auto map = open_room();
  Engine e(map, episode_at({5, 5, 0}, {8, 5}, 2.0), WorldConfig{}, 1);
  int n = 0;
  while (!e.done()) {
    e.step(kIdleIndex);
    ++n;
  }
  EXPECT_EQ(n, 6);
  EXPECT_EQ(e.outcome(), Outcome::timeout);
}

TEST(Engine, NoiseFreeOdometryIsGroundTruthInEpisodeFrame) {
  auto map = open_room();
  WorldConfig cfg;
  const Pose2 start{2, 3, 0.7};
  Engine e(map, episode_at(start, {8, 8}), cfg, 5);
  std::mt19937_64 rng(3);
  for (int k = 0; k < 30; ++k) {
    e.step(static_cast<int>(rng() % kNumMotionCommands));
    const Observation o = e.observe();
    const Pose2 truth = to_frame(start, e.state().pose());
    EXPECT_EQ(o.odom_pose.x, truth.x);
    EXPECT_EQ(o.odom_pose.y, truth.y);
    EXPECT_EQ(o.odom_pose.theta, truth.theta);
    EXPECT_EQ(o.loc_pose.x, truth.x);
    EXPECT_EQ(o.odom_v, e.state().v);
  }
}

TEST(Engine, OdometryDriftAccumulates) {
  auto map = open_room();
  WorldConfig cfg;
  cfg.noise.odom_mean = 0.01;
  Engine e(map, episode_at({5, 5, 0}, {8, 8}), cfg, 5);
  for (int k = 0; k < 10; ++k) e.step(kIdleIndex);
  const Observation o = e.observe();
  EXPECT_NEAR(o.odom_pose.x, 0.1, 1e-12);
  EXPECT_NEAR(o.odom_pose.y, 0.1, 1e-12);
}

TEST(Engine, GoalObservationIsStaticPolarGoal) {
  auto map = open_room();
  const Episode ep = episode_at({2, 2, kPi / 2}, {2, 5});
  Engine e(map, ep, WorldConfig{}, 1);
  EXPECT_NEAR(ep.goal.rho, 3.0, 1e-12);
  EXPECT_NEAR(ep.goal.phi, 0.0, 1e-12);
  e.step(forward_full(WorldConfig{}.dynamics));
  EXPECT_EQ(e.observe().goal, ep.goal);
}

TEST(Scan, OpenSpaceReturnsRangeMax) {
  OccupancyGrid g(120, 120, 0.1);
  ScanConfig cfg;
  const auto scan = raycast_scan(g, {6, 6, 0.3}, cfg);
  ASSERT_EQ(scan.size(), 128u);
  for (double r : scan) EXPECT_EQ(r, cfg.range_max);
}

TEST(Scan, RangeToWallAlongNormal) {
  OccupancyGrid g(100, 100, 0.1);
  g.fill_box({6.0, 0.0}, {6.1, 10.0});  // wall face at x = 6.0
  ScanConfig cfg;
  const auto scan = raycast_scan(g, {5.0, 5.0, 0.0}, cfg);
  EXPECT_NEAR(scan[0], 1.0, 0.1);
  // Facing the other way the wall is behind: ray num_rays/2.
  const auto back = raycast_scan(g, {5.0, 5.0, kPi}, cfg);
  EXPECT_NEAR(back[64], 1.0, 0.1);
}

TEST(Scan, ObliqueRangeMatchesGeometry) {
  OccupancyGrid g(100, 100, 0.1);
  g.fill_box({6.0, 0.0}, {6.1, 10.0});
  ScanConfig cfg;
  const auto scan = raycast_scan(g, {5.0, 5.0, 0.0}, cfg);
  const int k = 8;  // 22.5 degrees
  EXPECT_NEAR(scan[k], 1.0 / std::cos(ray_bearing(k, 128)), 0.11);
}

TEST(Scan, DeadZoneMasksObstacles) {
  OccupancyGrid g(100, 100, 0.1);
  g.fill_box({5.5, 0.0}, {5.6, 10.0});
  ScanConfig cfg;
  const double d = 15.0 * kPi / 180.0;
  cfg.dead_zones = {{-d, d}};
  const auto scan = raycast_scan(g, {5.0, 5.0, 0.0}, cfg);
  for (int k = 0; k < cfg.num_rays; ++k) {
    const double b = ray_bearing(k, cfg.num_rays);
    if (std::abs(b) <= d) {
      EXPECT_EQ(scan[k], cfg.range_max) << k;
    }
  }
  EXPECT_LT(scan[6], 1.0);  // just outside the sector
}

TEST(Scan, DeadZoneStraddlingBack) {
  ScanConfig cfg;
  cfg.dead_zones = {{3.0, 3.0 + 0.4}};
  EXPECT_TRUE(in_dead_zone(kPi, cfg));
  EXPECT_TRUE(in_dead_zone(-3.0, cfg));
  EXPECT_FALSE(in_dead_zone(0.0, cfg));
}

TEST(Scan, FourSensorGapsSitOnDiagonals) {
  ScanConfig cfg;
  cfg.dead_zones = sensor_gap_dead_zones(4, kPi / 3);  // 30 degree gaps
  ASSERT_EQ(cfg.dead_zones.size(), 4u);
  for (double d : {kPi / 4, 3 * kPi / 4, -kPi / 4, -3 * kPi / 4}) {
    EXPECT_TRUE(in_dead_zone(d, cfg));
    EXPECT_TRUE(in_dead_zone(d + 0.26, cfg));
    EXPECT_FALSE(in_dead_zone(d + 0.27, cfg));
  }
  for (double d : {0.0, kPi / 2, kPi, -kPi / 2}) EXPECT_FALSE(in_dead_zone(d, cfg));
  EXPECT_TRUE(sensor_gap_dead_zones(4, kPi / 2).empty());
}

TEST(Scan, RejectsPoseInObstacle) {
  OccupancyGrid g(20, 20, 0.1);
  g.fill_border();
  EXPECT_THROW(raycast_scan(g, {0.05, 0.05, 0}, ScanConfig{}), DataError);
}

TEST(Harness, ExpertReachesGoalOneMeterAhead) {
  auto map = open_room();
  ExpertPolicy expert;
  const TrajectoryLog log = run_episode(map, episode_at({4, 5, 0}, {5, 5}), WorldConfig{}, expert, {}, 1);
  EXPECT_EQ(log.outcome, Outcome::success);
  EXPECT_LT((log.final_state.position() - Vec2{5, 5}).norm(), 0.2);
}

TEST(Harness, DelayIsInvisibleToConstantPolicy) {
  auto map = open_room();
  const Episode ep = episode_at({2, 5, 0}, {8, 5}, 5.0);
  ConstantPolicy a(forward_full(DynParams{}) - 1), b(forward_full(DynParams{}) - 1);
  HarnessOpts delayed;
  delayed.delay_ms = 333;
  const TrajectoryLog l0 = run_episode(map, ep, WorldConfig{}, a, {}, 9);
  const TrajectoryLog l1 = run_episode(map, ep, WorldConfig{}, b, delayed, 9);
  ASSERT_EQ(l0.steps.size(), l1.steps.size());
  for (std::size_t k = 0; k < l0.steps.size(); ++k) {
    EXPECT_EQ(l0.steps[k].state.x, l1.steps[k].state.x);
    EXPECT_EQ(l0.steps[k].state.y, l1.steps[k].state.y);
    EXPECT_EQ(l0.steps[k].state.theta, l1.steps[k].state.theta);
  }
}

TEST(Harness, DelayedObservationLagsTruth) {
  auto map = open_room();
  WorldConfig cfg;
  cfg.mode = DynamicsMode::instant;
  Engine e(map, episode_at({2, 5, 0}, {8, 5}), cfg, 1);
  const int fwd = forward_full(cfg.dynamics);
  for (int k = 0; k < 3; ++k) e.step(fwd);
  // Constant 1 m/s: 0.2 s ago the robot was 0.2 m behind.
  EXPECT_NEAR(e.observe(0.2).odom_pose.x, e.frame_pose().x - 0.2, 1e-9);
}

TEST(Harness, ZeroingEventsEveryPeriod) {
  auto map = open_room();
  ConstantPolicy p(kIdleIndex);
  HarnessOpts h;
  h.zero_period_s = 3.0;
  const TrajectoryLog log = run_episode(map, episode_at({5, 5, 0}, {8, 5}, 10.0), WorldConfig{}, p, h, 1);
  std::vector<double> resets;
  for (const LogEvent& ev : log.events)
    if (ev.kind == "frame_reset") resets.push_back(ev.t);
  ASSERT_EQ(resets.size(), 3u);
  for (std::size_t k = 0; k < resets.size(); ++k) EXPECT_NEAR(resets[k], 3.0 * (k + 1), 1e-9);
}

TEST(Harness, FrameResetReexpressesGoal) {
  auto map = open_room();
  WorldConfig cfg;
  cfg.mode = DynamicsMode::instant;
  ScriptPolicy p({forward_full(cfg.dynamics), forward_full(cfg.dynamics), forward_full(cfg.dynamics), kIdleIndex});
  HarnessOpts h;
  h.zero_period_s = 1.0;
  const TrajectoryLog log = run_episode(map, episode_at({2, 5, 0}, {6, 5}, 2.0), cfg, p, h, 1);
  // After 1 s at 1 m/s the frame moved to x = 3; the goal is 3 m ahead.
  ASSERT_GT(log.steps.size(), 3u);
  EXPECT_NEAR(log.steps[3].obs.goal.rho, 3.0, 1e-9);
  EXPECT_NEAR(log.steps[3].obs.goal.phi, 0.0, 1e-9);
  EXPECT_NEAR(log.steps[3].obs.odom_pose.x, 0.0, 1e-9);
}

TEST(Harness, FrameResetDisabledKeepsFrame) {
  auto map = open_room();
  ConstantPolicy p(forward_full(DynParams{}));
  HarnessOpts h;
  h.zero_period_s = 1.0;
  h.frame_reset = false;
  const TrajectoryLog log = run_episode(map, episode_at({2, 5, 0}, {8, 5}, 2.0), WorldConfig{}, p, h, 1);
  for (const LogEvent& ev : log.events) EXPECT_EQ(ev.kind, "zero_memory");
  for (const StepRecord& s : log.steps) EXPECT_EQ(s.obs.goal, log.episode.goal);
}

TEST(Harness, VelocityClipLimitsSpeed) {
  auto map = open_room();
  ConstantPolicy p(forward_full(DynParams{}));
  HarnessOpts h;
  h.velocity_clip = 0.5;
  const TrajectoryLog log = run_episode(map, episode_at({1, 5, 0}, {9, 5}, 6.0), WorldConfig{}, p, h, 1);
  for (const StepRecord& s : log.steps) EXPECT_LE(s.state.v, 0.5 + 1e-9);
}

TEST(Harness, ZeroNearGoalFiresOnce) {
  auto map = open_room();
  ExpertPolicy expert;
  HarnessOpts h;
  h.zero_near_goal_m = 2.0;
  const TrajectoryLog log = run_episode(map, episode_at({2, 5, 0}, {7, 5}), WorldConfig{}, expert, h, 1);
  int zeros = 0;
  for (const LogEvent& ev : log.events) zeros += ev.kind == "zero_memory";
  EXPECT_EQ(zeros, 1);
  EXPECT_EQ(log.outcome, Outcome::success);
}

TEST(Harness, RewardTelescopesOverSuccessfulEpisode) {
  auto map = make_world_map("room", generate_room_map(4));
  const auto eps = generate_episodes(*map, 30, 4);
  int checked = 0;
  for (const Episode& ep : eps) {
    ExpertPolicy expert;
    const TrajectoryLog log = run_episode(map, ep, WorldConfig{}, expert, {}, 2);
    bool clean = log.success();
    for (const StepRecord& s : log.steps) clean = clean && !s.collision;
    if (!clean) continue;
    double sum = 0.0;
    for (const StepRecord& s : log.steps) sum += s.reward + 0.01;
    sum -= 2.5;
    const Engine probe(map, ep, WorldConfig{}, 0);
    const double end = robust_value(probe.geodesic(), log.final_state.position());
    EXPECT_NEAR(sum, log.steps.front().geo - end, 1e-6);
    ++checked;
  }
  EXPECT_GE(checked, 5);
}

TEST(Harness, NoTunneling) {
  auto map = make_world_map("room", generate_room_map(8));
  const auto eps = generate_episodes(*map, 10, 8);
  const OccupancyGrid& g = map->grid();
  for (const Episode& ep : eps) {
    // Aggressive policy: full speed ahead, turning slightly; bounces off walls.
    ConstantPolicy p(forward_full(DynParams{}) - 2);
    Episode shortened = ep;
    shortened.time_limit = 20.0;
    const TrajectoryLog log = run_episode(map, shortened, WorldConfig{}, p, {}, 1);
    for (std::size_t k = 0; k + 1 < log.steps.size(); ++k) {
      const Vec2 a = log.steps[k].state.position(), b = log.steps[k + 1].state.position();
      for (int s = 0; s <= 40; ++s) {
        const Vec2 q = a + (s / 40.0) * (b - a);
        const CellIndex c = g.geometry().cell_of(q);
        ASSERT_FALSE(g.occupied(c.i, c.j));
      }
      ASSERT_FALSE(map->checker().collides(b));
    }
  }
}

/// Brute-force configuration-space reachability: cells whose center is at
/// least `r` from every occupied cell's nearest point, 8-connected BFS.
bool reachable_oracle(const OccupancyGrid& g, Vec2 from, Vec2 to, double r) {
  const GridGeometry& geo = g.geometry();
  std::vector<char> ok(static_cast<std::size_t>(g.width() * g.height()), 1);
  const double h = 0.5 * g.resolution();
  for (int j = 0; j < g.height(); ++j)
    for (int i = 0; i < g.width(); ++i) {
      const Vec2 p = geo.center(i, j);
      const int reach = static_cast<int>(std::ceil(r / g.resolution())) + 1;
      for (int dj = -reach; dj <= reach && ok[j * g.width() + i]; ++dj)
        for (int di = -reach; di <= reach; ++di) {
          if (!g.occupied(i + di, j + dj)) continue;
          const Vec2 c = geo.center(i + di, j + dj);
          const double dx = std::max(0.0, std::abs(p.x - c.x) - h), dy = std::max(0.0, std::abs(p.y - c.y) - h);
          if (std::hypot(dx, dy) < r) {
            ok[j * g.width() + i] = 0;
            break;
          }
        }
    }
  const CellIndex s = geo.cell_of(from), t = geo.cell_of(to);
  std::vector<char> seen(ok.size(), 0);
  std::queue<CellIndex> q;
  if (!ok[s.j * g.width() + s.i]) return false;
  q.push(s);
  seen[s.j * g.width() + s.i] = 1;
  while (!q.empty()) {
    const CellIndex c = q.front();
    q.pop();
    if (c.i == t.i && c.j == t.j) return true;
    for (int dj = -1; dj <= 1; ++dj)
      for (int di = -1; di <= 1; ++di) {
        const int i = c.i + di, j = c.j + dj;
        if (!geo.in_bounds(i, j)) continue;
        const std::size_t id = static_cast<std::size_t>(j * g.width() + i);
        if (seen[id] || !ok[id]) continue;
        seen[id] = 1;
        q.push({i, j});
      }
  }
  return false;
}

TEST(EpisodeGenerator, EveryEpisodeIsSolvable) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    auto map = make_world_map("room", generate_room_map(seed));
    const auto eps = generate_episodes(*map, 20, seed);
    ASSERT_EQ(eps.size(), 20u);
    for (const Episode& ep : eps) {
      EXPECT_FALSE(map->checker().collides(ep.start.position()));
      EXPECT_FALSE(map->checker().collides(ep.goal_world()));
      EXPECT_TRUE(reachable_oracle(map->grid(), ep.start.position(), ep.goal_world(), map->robot_radius()));
    }
  }
}

TEST(EpisodeGenerator, Deterministic) {
  auto map = make_world_map("room", generate_room_map(2));
  EXPECT_EQ(generate_episodes(*map, 5, 7), generate_episodes(*map, 5, 7));
}

TEST(EpisodeGenerator, FullyBlockedMapIsInfeasible) {
  OccupancyGrid g(20, 20, 0.1);
  g.fill_box({0, 0}, {2, 2});
  auto map = make_world_map("solid", std::move(g));
  EXPECT_THROW(generate_episodes(*map, 1, 0), InfeasibleError);
}

TEST(Maps, AsciiRoundTrip) {
  const OccupancyGrid g = generate_room_map(3);
  const OccupancyGrid back = grid_from_ascii(grid_to_ascii(g), g.resolution());
  ASSERT_EQ(back.width(), g.width());
  ASSERT_EQ(back.height(), g.height());
  for (int j = 0; j < g.height(); ++j)
    for (int i = 0; i < g.width(); ++i) ASSERT_EQ(back.occupied(i, j), g.occupied(i, j));
}

TEST(Maps, AsciiFirstLineIsTopRow) {
  const OccupancyGrid g = grid_from_ascii("#..\n...\n", 0.5, {1.0, 2.0});
  EXPECT_TRUE(g.occupied(0, 1));
  EXPECT_FALSE(g.occupied(0, 0));
  EXPECT_EQ(g.geometry().center(0, 0), (Vec2{1.25, 2.25}));
}

TEST(Maps, RejectsBadAscii) {
  EXPECT_THROW(grid_from_ascii("#.x\n", 0.1), DataError);
  EXPECT_THROW(grid_from_ascii("#..\n..\n", 0.1), DataError);
  EXPECT_THROW(grid_from_ascii("", 0.1), DataError);
}

TEST(Maps, PgmThreshold) {
  std::string pgm = "P5\n# comment\n3 2\n255\n";
  pgm += std::string{char(0), char(127), char(128)};
  pgm += std::string{char(255), char(200), char(10)};
  const OccupancyGrid g = grid_from_pgm(pgm, 0.1);
  EXPECT_TRUE(g.occupied(0, 1));
  EXPECT_TRUE(g.occupied(1, 1));
  EXPECT_FALSE(g.occupied(2, 1));
  EXPECT_FALSE(g.occupied(0, 0));
  EXPECT_TRUE(g.occupied(2, 0));
  EXPECT_THROW(grid_from_pgm("P2\n1 1\n255\n0", 0.1), DataError);
}

TEST(Maps, SaveAndLoad) {
  const auto dir = std::filesystem::temp_directory_path() / "navlab_world_test";
  std::filesystem::remove_all(dir);
  OccupancyGrid g(30, 20, 0.05, {-1.0, 2.0});
  g.fill_border();
  g.set(5, 7, true);
  save_map(dir / "m", g);
  const OccupancyGrid back = load_map(dir / "m.grid");
  EXPECT_EQ(back.resolution(), 0.05);
  EXPECT_EQ(back.origin(), (Vec2{-1.0, 2.0}));
  EXPECT_EQ(back.count_occupied(), g.count_occupied());
  EXPECT_TRUE(back.occupied(5, 7));
  std::filesystem::remove(dir / "m.json");
  EXPECT_THROW(load_map(dir / "m"), DataError);
  std::filesystem::remove_all(dir);
}

TEST(Grid, OutOfBoundsIsOccupied) {
  OccupancyGrid g(10, 10, 0.1);
  EXPECT_TRUE(g.occupied(-1, 0));
  EXPECT_TRUE(g.occupied(0, 10));
  EXPECT_FALSE(g.occupied(0, 0));
}

TEST(Grid, WallDistanceMatchesBruteForce) {
  const OccupancyGrid g = generate_room_map(6, {.width_m = 4, .height_m = 4, .num_boxes = 3});
  const Raster<double> d = wall_distance(g);
  const GridGeometry& geo = g.geometry();
  for (int j = 0; j < g.height(); j += 3)
    for (int i = 0; i < g.width(); i += 3) {
      if (g.occupied(i, j)) continue;
      double best = std::numeric_limits<double>::infinity();
      for (int jj = -1; jj <= g.height(); ++jj)
        for (int ii = -1; ii <= g.width(); ++ii)
          if (g.occupied(ii, jj)) best = std::min(best, (geo.center(i, j) - geo.center(ii, jj)).norm());
      EXPECT_NEAR(d.at(i, j), best - 0.5 * g.resolution(), 1e-9);
    }
}

TEST(Collision, SweptFractionStopsAtContact) {
  OccupancyGrid g(100, 100, 0.1);
  g.fill_box({6.0, 0.0}, {6.1, 10.0});
  CollisionChecker c(g, 0.25);
  const double f = c.free_fraction({5.0, 5.0}, {6.0, 5.0});
  EXPECT_NEAR(5.0 + f * 1.0, 5.75, 1e-6);
  EXPECT_EQ(c.free_fraction({5.0, 5.0}, {5.5, 5.0}), 1.0);
}

}  // namespace
}  // namespace navlab
