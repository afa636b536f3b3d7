#pragma once

// Episode-stepping engine: dynamics, swept-disc collisions, sensors, reward
// and success rule, plus the deployment harness used by the ablation studies.

#include <algorithm>
#include <cmath>
#include <deque>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "navlab/dynamics.hpp"
#include "navlab/grid.hpp"
#include "navlab/random.hpp"
#include "navlab/sensors.hpp"
#include "navlab/time_field.hpp"

namespace navlab {

/// A named grid with its collision checker. Immutable once built; share it
/// through std::shared_ptr<const WorldMap>.
class WorldMap {
 public:
  WorldMap(std::string id, OccupancyGrid grid, double robot_radius)
      : id_(std::move(id)), grid_(std::move(grid)), checker_(grid_, robot_radius) {}
  WorldMap(const WorldMap&) = delete;
  WorldMap& operator=(const WorldMap&) = delete;

  const std::string& id() const { return id_; }
  const OccupancyGrid& grid() const { return grid_; }
  const CollisionChecker& checker() const { return checker_; }
  double robot_radius() const { return checker_.radius(); }

 private:
  std::string id_;
  OccupancyGrid grid_;
  CollisionChecker checker_;
};

inline std::shared_ptr<const WorldMap> make_world_map(std::string id, OccupancyGrid grid,
                                                      double robot_radius = 0.25) {
  return std::make_shared<const WorldMap>(std::move(id), std::move(grid), robot_radius);
}

struct Episode {
  std::string id;
  std::string map_id;
  Pose2 start;
  /// Goal relative to the start frame.
  PolarGoal goal;
  double success_radius = 0.2;
  double time_limit = 120.0;

  Vec2 goal_world() const { return from_frame(start, Pose2{goal.to_cartesian().x, goal.to_cartesian().y, 0}).position(); }
  friend bool operator==(const Episode&, const Episode&) = default;
};

struct SensorNoise {
  /// Per-step odometry drift added to x and y (meters).
  double odom_mean = 0.0;
  double odom_std = 0.0;
  /// Per-step heading drift (radians).
  double odom_heading_std = 0.0;
  double odom_vel_std = 0.0;
  /// Localization: ground truth plus fresh Gaussian noise every step.
  double loc_std = 0.0;
  double loc_heading_std = 0.0;
  friend bool operator==(const SensorNoise&, const SensorNoise&) = default;
};

struct RewardConfig {
  double success = 2.5;
  double slack = 0.01;
  double collision = 0.1;
};

struct WorldConfig {
  DynParams dynamics;
  DynamicsMode mode = DynamicsMode::second_order;
  ScanConfig scan;
  SensorNoise noise;
  RewardConfig reward;
  /// "Not moving" thresholds of the success rule.
  double stop_linear_eps = 0.05;
  double stop_angular_eps = 0.05;
};

struct Observation {
  std::vector<double> scan;
  Pose2 odom_pose;
  double odom_v = 0.0;
  double odom_omega = 0.0;
  Pose2 loc_pose;
  PolarGoal goal;
  int prev_action = kIdleIndex;
};

enum class Outcome { running, success, timeout, stopped_far };

inline const char* to_string(Outcome o) {
  switch (o) {
    case Outcome::running: return "running";
    case Outcome::success: return "success";
    case Outcome::timeout: return "timeout";
    case Outcome::stopped_far: return "stopped_far";
  }
  return "running";
}

inline Outcome parse_outcome(const std::string& s) {
  for (Outcome o : {Outcome::running, Outcome::success, Outcome::timeout, Outcome::stopped_far})
    if (s == to_string(o)) return o;
  throw DataError("unknown outcome '" + s + "'");
}

struct StepResult {
  double reward = 0.0;
  bool done = false;
  bool collision = false;
  /// Decrease of geodesic distance to goal over the step (meters).
  double geo_delta = 0.0;
};

class Engine {
 public:
  Engine(std::shared_ptr<const WorldMap> map, Episode episode, WorldConfig config, std::uint64_t seed,
         std::shared_ptr<const TimeField> geodesic = nullptr)
      : map_(std::move(map)), episode_(std::move(episode)), config_(std::move(config)), rng_(make_rng(seed, {1})) {
    config_.dynamics.validate();
    if (!(episode_.success_radius > 0.0)) throw DataError("success radius must be > 0");
    goal_world_ = episode_.goal_world();
    geodesic_ = geodesic ? std::move(geodesic)
                         : std::make_shared<const TimeField>(
                               solve_geodesic(map_->grid(), goal_world_, map_->robot_radius()));
    state_.set_pose(episode_.start);
    if (map_->checker().collides(state_.position())) throw InfeasibleError("start pose collides with the map");
    frame_ = episode_.start;
    frame_goal_ = episode_.goal;
    geo_ = robust_value(*geodesic_, state_.position());
    history_.push_back({0.0, state_});
  }

  const RobotState& state() const { return state_; }
  double time() const { return time_; }
  Outcome outcome() const { return outcome_; }
  bool done() const { return outcome_ != Outcome::running; }
  const Episode& episode() const { return episode_; }
  const WorldConfig& config() const { return config_; }
  const WorldMap& map() const { return *map_; }
  Vec2 goal_world() const { return goal_world_; }
  /// World pose of the current episode frame.
  const Pose2& frame() const { return frame_; }
  double geodesic_distance() const { return geo_; }
  double path_length() const { return path_length_; }
  int prev_action() const { return prev_action_; }
  const TimeField& geodesic() const { return *geodesic_; }
  std::shared_ptr<const TimeField> geodesic_ptr() const { return geodesic_; }

  /// Ground-truth pose in the current episode frame.
  Pose2 frame_pose() const { return to_frame(frame_, state_.pose()); }

  /// Goal relative to the current episode frame; exactly the episode's goal
  /// until the frame is reset.
  const PolarGoal& frame_goal() const { return frame_goal_; }

  /// Current dead-reckoned pose in the episode frame (no fresh noise draw).
  Pose2 odometry_pose() const {
    const Pose2 local = frame_pose();
    return {local.x + odom_error_.x, local.y + odom_error_.y, wrap_angle(local.theta + odom_error_.theta)};
  }

  /// Builds the observation. With `delay` > 0 the pose and velocity channels
  /// describe the robot `delay` seconds earlier (linear interpolation between
  /// substep states). Draws fresh localization / velocity noise.
  Observation observe(double delay = 0.0) {
    const RobotState s = delay > 0.0 ? state_at(time_ - delay) : state_;
    Observation o;
    o.scan = raycast_scan(map_->grid(), s.pose(), config_.scan);
    const Pose2 local = to_frame(frame_, s.pose());
    o.odom_pose = {local.x + odom_error_.x, local.y + odom_error_.y, wrap_angle(local.theta + odom_error_.theta)};
    const SensorNoise& n = config_.noise;
    o.odom_v = s.v + gaussian(rng_, 0.0, n.odom_vel_std);
    o.odom_omega = s.omega + gaussian(rng_, 0.0, n.odom_vel_std);
    o.loc_pose = {local.x + gaussian(rng_, 0.0, n.loc_std), local.y + gaussian(rng_, 0.0, n.loc_std),
                  wrap_angle(local.theta + gaussian(rng_, 0.0, n.loc_heading_std))};
    o.goal = frame_goal();
    o.prev_action = prev_action_;
    return o;
  }

  /// Applies one command for a decision period. `v_clip` limits the commanded
  /// linear velocity (fraction of v_max) without rescaling the action grid.
  StepResult step(int action, std::optional<double> v_clip = std::nullopt) {
    if (done()) throw std::logic_error("step after episode end");
    Command cmd = resolve_command(action, config_.dynamics);
    if (v_clip) cmd.a_v = std::min(cmd.a_v, *v_clip * config_.dynamics.v_max);

    const DynParams& dyn = config_.dynamics;
    const int n = dyn.substeps_per_decision();
    const double h = dyn.substep_dt();
    StepResult r;
    for (int k = 1; k <= n; ++k) {
      RobotState next = state_;
      if (!r.collision) {
        integrate_substep(next, cmd, dyn, config_.mode);
        const double frac = map_->checker().free_fraction(state_.position(), next.position());
        if (frac < 1.0) {
          const Vec2 stop = state_.position() + frac * (next.position() - state_.position());
          next.x = stop.x;
          next.y = stop.y;
          next.v = next.omega = next.vdot = next.omegadot = 0.0;
          r.collision = true;
        }
      }
      path_length_ += (next.position() - state_.position()).norm();
      state_ = next;
      history_.push_back({time_ + k * h, state_});
    }
    time_ += dyn.decision_dt();
    while (history_.size() > 4 * static_cast<std::size_t>(n) * 10) history_.pop_front();

    const SensorNoise& noise = config_.noise;
    odom_error_.x += gaussian(rng_, noise.odom_mean, noise.odom_std);
    odom_error_.y += gaussian(rng_, noise.odom_mean, noise.odom_std);
    odom_error_.theta += gaussian(rng_, 0.0, noise.odom_heading_std);

    const double geo = robust_value(*geodesic_, state_.position());
    r.geo_delta = geo_ - geo;
    geo_ = geo;

    bool success = false;
    if (cmd.is_stop()) {
      const bool still = std::abs(state_.v) < config_.stop_linear_eps &&
                         std::abs(state_.omega) < config_.stop_angular_eps;
      if (still) {
        success = (state_.position() - goal_world_).norm() < episode_.success_radius;
        outcome_ = success ? Outcome::success : Outcome::stopped_far;
      }
    }
    if (outcome_ == Outcome::running && time_ >= episode_.time_limit - 1e-9) outcome_ = Outcome::timeout;

    const RewardConfig& rc = config_.reward;
    r.reward = (success ? rc.success : 0.0) + r.geo_delta - rc.slack - (r.collision ? rc.collision : 0.0);
    r.done = done();
    prev_action_ = action;
    return r;
  }

  /// Redefines the episode frame at `new_frame` (given in the current frame).
  /// Odometry keeps its accumulated error, re-expressed in the new frame.
  void reset_frame(const Pose2& new_frame) {
    const Pose2 odom = odometry_pose();
    frame_ = from_frame(frame_, new_frame);
    frame_goal_ = PolarGoal::from_cartesian(to_frame(frame_, Pose2{goal_world_.x, goal_world_.y, 0}).position());
    const Pose2 odom_new = to_frame(new_frame, odom);
    const Pose2 local_new = to_frame(frame_, state_.pose());
    odom_error_ = {odom_new.x - local_new.x, odom_new.y - local_new.y, wrap_angle(odom_new.theta - local_new.theta)};
  }

 private:
  RobotState state_at(double t) const {
    if (t <= history_.front().first) return history_.front().second;
    for (std::size_t k = history_.size() - 1; k > 0; --k) {
      const auto& [t0, s0] = history_[k - 1];
      const auto& [t1, s1] = history_[k];
      if (t >= t0 && t <= t1) {
        const double a = (t1 > t0) ? (t - t0) / (t1 - t0) : 0.0;
        RobotState s = s0;
        s.x += a * (s1.x - s0.x);
        s.y += a * (s1.y - s0.y);
        s.theta = wrap_angle(s0.theta + a * wrap_angle(s1.theta - s0.theta));
        s.v += a * (s1.v - s0.v);
        s.omega += a * (s1.omega - s0.omega);
        s.vdot += a * (s1.vdot - s0.vdot);
        s.omegadot += a * (s1.omegadot - s0.omegadot);
        return s;
      }
    }
    return history_.back().second;
  }

  std::shared_ptr<const WorldMap> map_;
  Episode episode_;
  WorldConfig config_;
  Rng rng_;
  std::shared_ptr<const TimeField> geodesic_;
  Vec2 goal_world_{};
  RobotState state_;
  Pose2 frame_;
  PolarGoal frame_goal_;
  Pose2 odom_error_{};
  double time_ = 0.0;
  double geo_ = 0.0;
  double path_length_ = 0.0;
  int prev_action_ = kIdleIndex;
  Outcome outcome_ = Outcome::running;
  std::deque<std::pair<double, RobotState>> history_;
};

// ---------------------------------------------------------------------------
// Policies and the episode runner.

struct EpisodeContext {
  const WorldMap* map = nullptr;
  const Episode* episode = nullptr;
  const WorldConfig* world = nullptr;
};

struct PolicyInput {
  const Observation& obs;
  /// Privileged ground truth (world frame); only map-based experts read it.
  const RobotState& true_state;
  double time = 0.0;
};

class Policy {
 public:
  virtual ~Policy() = default;
  virtual void begin_episode(const EpisodeContext&) {}
  /// Returns a command index in [0, 28].
  virtual int act(const PolicyInput& in) = 0;
  /// Clears recurrent state.
  virtual void zero_memory() {}
  /// The episode frame was redefined at `new_frame` (expressed in the old frame).
  virtual void on_frame_reset(const Pose2& /*new_frame*/) {}
  /// Current pose belief in the episode frame, when the policy keeps one.
  virtual std::optional<Pose2> estimated_pose() const { return std::nullopt; }
  /// Recurrent state h_t after the last act(); empty for memoryless policies.
  virtual std::vector<double> latent() const { return {}; }
};

struct HarnessOpts {
  /// Observation delay (ms) relative to command application.
  double delay_ms = 0.0;
  /// Deployment-only cap on commanded a_v, as a fraction of v_max.
  std::optional<double> velocity_clip;
  /// Zero the policy memory every `zero_period_s` seconds (0: never).
  double zero_period_s = 0.0;
  /// Redefine the episode frame at the estimated pose when zeroing.
  bool frame_reset = true;
  /// Zero once when the estimated distance to goal drops below this (0: off).
  double zero_near_goal_m = 0.0;
  bool record_latent = true;
  bool record_scan = true;
};

struct StepRecord {
  double t = 0.0;
  RobotState state;
  Observation obs;
  int action = kIdleIndex;
  double reward = 0.0;
  bool collision = false;
  /// Geodesic distance to goal before the step.
  double geo = 0.0;
  std::vector<double> latent;
};

struct LogEvent {
  double t = 0.0;
  std::string kind;  // "zero_memory" | "frame_reset"
  Pose2 frame;       // new frame (world) for frame resets
};

struct TrajectoryLog {
  Episode episode;
  std::vector<StepRecord> steps;
  std::vector<LogEvent> events;
  RobotState final_state;
  Outcome outcome = Outcome::running;
  double path_length = 0.0;
  double geodesic_optimal = 0.0;
  double episode_time = 0.0;
  double optimal_time = 0.0;
  Vec2 goal_world{};
  int decision_hz = 3;

  bool success() const { return outcome == Outcome::success; }
};

inline TrajectoryLog run_episode(const std::shared_ptr<const WorldMap>& map, const Episode& episode,
                                 const WorldConfig& config, Policy& policy, const HarnessOpts& harness,
                                 std::uint64_t seed, std::shared_ptr<const TimeField> geodesic = nullptr) {
  Engine engine(map, episode, config, seed, std::move(geodesic));
  TrajectoryLog log;
  log.episode = episode;
  log.goal_world = engine.goal_world();
  log.decision_hz = config.dynamics.decision_hz;
  log.geodesic_optimal = engine.geodesic_distance();
  log.optimal_time = optimal_traversal_time(engine.geodesic(), episode.start, config.dynamics.v_max,
                                            config.dynamics.omega_max);

  const EpisodeContext ctx{map.get(), &episode, &config};
  policy.begin_episode(ctx);
  const double delay = harness.delay_ms / 1000.0;
  const double dt = config.dynamics.decision_dt();
  bool zeroed_near_goal = false;
  int step_index = 0;

  auto zero_now = [&]() {
    const Pose2 est = policy.estimated_pose().value_or(engine.odometry_pose());
    policy.zero_memory();
    log.events.push_back({engine.time(), "zero_memory", engine.frame()});
    if (harness.frame_reset) {
      engine.reset_frame(est);
      policy.on_frame_reset(est);
      log.events.push_back({engine.time(), "frame_reset", engine.frame()});
    }
  };

  while (!engine.done()) {
    if (step_index > 0) {
      if (harness.zero_period_s > 0.0) {
        const int period_steps = std::max(1, static_cast<int>(std::lround(harness.zero_period_s / dt)));
        if (step_index % period_steps == 0) zero_now();
      }
      if (harness.zero_near_goal_m > 0.0 && !zeroed_near_goal) {
        const Pose2 est = policy.estimated_pose().value_or(engine.odometry_pose());
        const Vec2 g = engine.frame_goal().to_cartesian();
        if ((g - est.position()).norm() < harness.zero_near_goal_m) {
          zeroed_near_goal = true;
          zero_now();
        }
      }
    }
    Observation obs = engine.observe(delay);
    StepRecord rec;
    rec.t = engine.time();
    rec.state = engine.state();
    rec.geo = engine.geodesic_distance();
    const int action = policy.act({obs, engine.state(), engine.time()});
    if (!valid_command_index(action)) throw std::runtime_error("policy emitted invalid command " + std::to_string(action));
    if (harness.record_latent) rec.latent = policy.latent();
    const StepResult res = engine.step(action, harness.velocity_clip);
    rec.action = action;
    rec.reward = res.reward;
    rec.collision = res.collision;
    if (!harness.record_scan) obs.scan.clear();
    rec.obs = obs;
    log.steps.push_back(std::move(rec));
    ++step_index;
  }
  log.final_state = engine.state();
  log.outcome = engine.outcome();
  log.path_length = engine.path_length();
  log.episode_time = engine.time();
  return log;
}

}  // namespace navlab
