#pragma once

// Fast-Marching expert: five-term action cost, greedy controller over the
// 28-command grid, per-step planning-quality measure and its spatial heatmap.

#include <cmath>
#include <concepts>
#include <limits>
#include <memory>
#include <optional>
#include <vector>

#include "navlab/dynamics.hpp"
#include "navlab/grid.hpp"
#include "navlab/time_field.hpp"
#include "navlab/world.hpp"

namespace navlab {

struct CostWeights {
  double w_pos = 10.0;
  double w_angle = 0.1;
  double w_slow = 1.0;
  double w_rot = 1e-3;
  double w_coll = 1e3;
  /// Braking strength: allowed speed per second of remaining travel time.
  double beta = 0.5;
  /// Wall-slowdown coefficient K of the time field's speed.
  double wall_slowdown = 0.5;
};

template <class F>
concept TimeToGoalField = requires(const F& f, Vec2 p) {
  { f.value_at(p) } -> std::convertible_to<double>;
  { f.gradient_at(p) } -> std::convertible_to<Vec2>;
};

/// Obstacle-free time to goal: |p - goal| / v_max.
struct FreeSpaceField {
  Vec2 goal{};
  double v_max = 1.0;

  double value_at(Vec2 p) const { return (p - goal).norm() / v_max; }
  Vec2 gradient_at(Vec2 p) const {
    const Vec2 d = p - goal;
    const double n = d.norm();
    if (n < 1e-12) return {};
    return (1.0 / (n * v_max)) * d;
  }
};

struct CostTerms {
  double position = 0.0;
  double angle = 0.0;
  double slowdown = 0.0;
  double rotation = 0.0;
  double collision = 0.0;
  RobotState next;

  double total() const { return position + angle + slowdown + rotation + collision; }
};

/// Simulates one decision period of `a` from `p` under `dyn` and scores the
/// resulting state. `checker` may be null (no collision term).
template <TimeToGoalField Field>
CostTerms action_cost_terms(const RobotState& p, const Command& a, const Field& field, const CostWeights& w,
                            const DynParams& dyn, const CollisionChecker* checker,
                            DynamicsMode mode = DynamicsMode::second_order) {
  CostTerms c;
  bool collided = false;
  RobotState prev = p;
  c.next = integrate_command(p, a, dyn, mode, [&](const RobotState& s, int) {
    if (checker && checker->free_fraction(prev.position(), s.position()) < 1.0) collided = true;
    prev = s;
    return true;
  });
  const RobotState& n = c.next;
  double t = field.value_at(n.position());
  if (!std::isfinite(t)) {
    collided = true;
    t = field.value_at(p.position());
    if (!std::isfinite(t)) t = 0.0;
  }
  c.position = w.w_pos * t;
  const Vec2 g = field.gradient_at(n.position());
  if (g.norm() > 1e-9) c.angle = w.w_angle * std::abs(wrap_angle(n.theta - std::atan2(-g.y, -g.x)));
  c.slowdown = w.w_slow * std::max(0.0, n.v - w.beta * t);
  c.rotation = w.w_rot * std::abs(n.omega);
  c.collision = collided ? w.w_coll : 0.0;
  return c;
}

template <TimeToGoalField Field>
double action_cost(const RobotState& p, const Command& a, const Field& field, const CostWeights& w,
                   const DynParams& dyn, const CollisionChecker* checker = nullptr,
                   DynamicsMode mode = DynamicsMode::second_order) {
  return action_cost_terms(p, a, field, w, dyn, checker, mode).total();
}

/// Index of the cheapest motion command; ties go to the lowest index.
template <TimeToGoalField Field>
int best_action(const RobotState& p, const Field& field, const CostWeights& w, const DynParams& dyn,
                const CollisionChecker* checker, DynamicsMode mode = DynamicsMode::second_order) {
  int best = 0;
  double best_cost = std::numeric_limits<double>::infinity();
  for (int i = 0; i < kNumMotionCommands; ++i) {
    const double c = action_cost(p, resolve_command(i, dyn), field, w, dyn, checker, mode);
    if (c < best_cost) {
      best_cost = c;
      best = i;
    }
  }
  return best;
}

struct RestPrediction {
  Vec2 point;
  /// The braking path touches an obstacle (only checked with a checker).
  bool collides = false;
};

/// Where the robot comes to rest under a held zero command.
inline RestPrediction predict_rest(const RobotState& s, const DynParams& dyn, DynamicsMode mode,
                                   const CollisionChecker* checker = nullptr, double eps_v = 0.05,
                                   double eps_w = 0.05, int max_periods = 30) {
  RobotState r = s;
  bool hit = false;
  const Command stop = stop_command();
  for (int k = 0; k < max_periods && !hit; ++k) {
    if (std::abs(r.v) < eps_v && std::abs(r.omega) < eps_w) break;
    RobotState prev = r;
    r = integrate_command(r, stop, dyn, mode, [&](const RobotState& x, int) {
      if (checker && checker->free_fraction(prev.position(), x.position()) < 1.0) hit = true;
      prev = x;
      return true;
    });
  }
  return {r.position(), hit};
}

struct ExpertOptions {
  CostWeights weights;
  /// The expert's internal dynamics model (its belief).
  DynParams belief;
  DynamicsMode mode = DynamicsMode::second_order;
  enum class PoseSource { ground_truth, odometry, localization };
  PoseSource source = PoseSource::ground_truth;
  /// Plan on the map's time field, or straight at the observed goal (obstacle-free maps).
  enum class FieldSource { map, observed_goal };
  FieldSource field_source = FieldSource::map;
  /// STOP is ordered when the rest point predicted under a held zero command
  /// lies within this fraction of the success radius (or the robot is already
  /// still inside the radius).
  double predictive_stop = 0.75;
  /// Clearance beyond the robot radius the expert's field keeps from walls.
  /// Dropped when the task is not solvable with it.
  double planning_margin = 0.1;
  /// Only consider commands after which coasting to rest does not increase
  /// the time to goal (falls back to the plain argmin when none qualifies).
  bool braking_guard = true;
};

/// Time field the expert plans on for `goal`: the map inflated by the robot
/// radius plus the planning margin, or by the radius alone when the margin
/// disconnects `start`.
inline TimeField plan_expert_field(const WorldMap& map, Vec2 goal, Vec2 start, const ExpertOptions& opt = {}) {
  SpeedFieldOptions so;
  so.v_max = opt.belief.v_max;
  so.wall_slowdown = opt.weights.wall_slowdown;
  so.inflation_radius = map.robot_radius();
  if (opt.planning_margin > 0.0) {
    SpeedFieldOptions wide = so;
    wide.inflation_radius += opt.planning_margin;
    try {
      TimeField f = solve_time_field(map.grid(), goal, wide);
      if (std::isfinite(robust_value(f, start))) return f;
    } catch (const InfeasibleError&) {
    }
  }
  return solve_time_field(map.grid(), goal, so);
}

/// Greedy minimiser of the action cost.
class ExpertPolicy : public Policy {
 public:
  explicit ExpertPolicy(ExpertOptions opt = {}) : opt_(std::move(opt)) {}

  const ExpertOptions& options() const { return opt_; }
  const TimeField* field() const { return field_.get(); }

  void begin_episode(const EpisodeContext& ctx) override {
    map_ = ctx.map;
    success_radius_ = ctx.episode->success_radius;
    eps_v_ = ctx.world->stop_linear_eps;
    eps_w_ = ctx.world->stop_angular_eps;
    world_from_frame_ = ctx.episode->start;
    if (opt_.field_source == ExpertOptions::FieldSource::map) {
      const Vec2 goal = ctx.episode->goal_world();
      if (!field_ || field_map_ != ctx.map || !(field_->goal == goal)) {
        field_ = std::make_shared<const TimeField>(plan_expert_field(*ctx.map, goal, ctx.episode->start.position(), opt_));
        field_map_ = ctx.map;
      }
    }
  }

  void on_frame_reset(const Pose2& new_frame) override { world_from_frame_ = from_frame(world_from_frame_, new_frame); }

  int act(const PolicyInput& in) override {
    const RobotState s = belief_state(in);
    const CollisionChecker* checker = map_ ? &map_->checker() : nullptr;
    if (opt_.field_source == ExpertOptions::FieldSource::observed_goal) {
      const Pose2 g = from_frame(world_from_frame_, Pose2{in.obs.goal.to_cartesian().x, in.obs.goal.to_cartesian().y, 0});
      return decide(s, FreeSpaceField{g.position(), opt_.belief.v_max}, checker);
    }
    return decide(s, RobustFieldView{field_.get(), checker}, checker);
  }

 protected:
  /// State the expert plans from, in world coordinates.
  virtual RobotState belief_state(const PolicyInput& in) {
    if (opt_.source == ExpertOptions::PoseSource::ground_truth) return in.true_state;
    const Pose2 local = opt_.source == ExpertOptions::PoseSource::odometry ? in.obs.odom_pose : in.obs.loc_pose;
    RobotState s;
    s.set_pose(from_frame(world_from_frame_, local));
    s.v = in.obs.odom_v;
    s.omega = in.obs.odom_omega;
    return s;
  }

  const Pose2& world_from_frame() const { return world_from_frame_; }

  template <TimeToGoalField Field>
  int decide(const RobotState& s, const Field& field, const CollisionChecker* checker) const {
    const Vec2 goal = goal_of(field);
    const bool still = std::abs(s.v) < eps_v_ && std::abs(s.omega) < eps_w_;
    if (still && (s.position() - goal).norm() < success_radius_) return kStopIndex;
    if (opt_.predictive_stop > 0.0) {
      const RestPrediction rest = predict_rest(s, opt_.belief, opt_.mode, checker, eps_v_, eps_w_);
      if (!rest.collides && (rest.point - goal).norm() < opt_.predictive_stop * success_radius_ &&
          (!opt_.braking_guard || coast_overshoot(s, field) <= 1e-9))
        return kStopIndex;
    }
    if (!opt_.braking_guard) return best_action(s, field, opt_.weights, opt_.belief, checker, opt_.mode);
    // Cheapest command whose coast does not overshoot; otherwise the one that
    // overshoots least.
    int best = -1, fallback = 0;
    double best_cost = std::numeric_limits<double>::infinity(), least_overshoot = best_cost;
    for (int i = 0; i < kNumMotionCommands; ++i) {
      const CostTerms c = action_cost_terms(s, resolve_command(i, opt_.belief), field, opt_.weights, opt_.belief,
                                            checker, opt_.mode);
      const double total = c.total();
      if (total >= best_cost && best >= 0) continue;
      const double over = coast_overshoot(c.next, field);
      if (over <= 1e-9) {
        best_cost = total;
        best = i;
      } else if (best < 0 && over < least_overshoot) {
        least_overshoot = over;
        fallback = i;
      }
    }
    return best >= 0 ? best : fallback;
  }

 private:
  /// How much the time to goal rises while holding a zero command from `s`
  /// until the robot settles (0 when coasting only approaches the goal).
  template <TimeToGoalField Field>
  double coast_overshoot(const RobotState& s, const Field& field) const {
    RobotState r = s;
    double lowest = field.value_at(r.position()), worst = 0.0;
    const Command stop = stop_command();
    for (int k = 0; k < 30; ++k) {
      if (std::abs(r.v) < eps_v_ && std::abs(r.omega) < eps_w_) break;
      r = integrate_command(r, stop, opt_.belief, opt_.mode);
      const double t = field.value_at(r.position());
      worst = std::max(worst, t - lowest);
      lowest = std::min(lowest, t);
    }
    return worst;
  }

  static Vec2 goal_of(const TimeField& f) { return f.goal; }
  static Vec2 goal_of(const RobustFieldView& f) { return f.field->goal; }
  static Vec2 goal_of(const FreeSpaceField& f) { return f.goal; }

  ExpertOptions opt_;
  const WorldMap* map_ = nullptr;
  const WorldMap* field_map_ = nullptr;
  std::shared_ptr<const TimeField> field_;
  Pose2 world_from_frame_;
  double success_radius_ = 0.2;
  double eps_v_ = 0.05;
  double eps_w_ = 0.05;
};

// ---------------------------------------------------------------------------
// Planning quality.

/// M(t) = C(p_{t+1}, a_{t+1}) - C(p_t, a_t) along a logged trajectory; one
/// value per step except the last.
template <TimeToGoalField Field>
std::vector<double> planning_quality(const TrajectoryLog& log, const Field& field, const CostWeights& w,
                                     const DynParams& dyn, const CollisionChecker* checker = nullptr,
                                     DynamicsMode mode = DynamicsMode::second_order) {
  std::vector<double> costs;
  costs.reserve(log.steps.size());
  for (const StepRecord& s : log.steps)
    costs.push_back(action_cost(s.state, resolve_command(s.action, dyn), field, w, dyn, checker, mode));
  std::vector<double> m;
  for (std::size_t t = 0; t + 1 < costs.size(); ++t) m.push_back(costs[t + 1] - costs[t]);
  return m;
}

struct QualitySeries {
  std::vector<Vec2> positions;
  std::vector<double> values;
};

inline QualitySeries quality_series(const TrajectoryLog& log, const std::vector<double>& m) {
  QualitySeries q;
  for (std::size_t t = 0; t < m.size() && t < log.steps.size(); ++t) {
    q.positions.push_back(log.steps[t].state.position());
    q.values.push_back(m[t]);
  }
  return q;
}

struct QualityHeatmap {
  Raster<double> positive;
  Raster<double> negative;
};

/// Gaussian kernel density of max(M,0) and max(-M,0) at the logged
/// positions, evaluated at cell centers. Kernels are truncated at 4 sigma.
inline QualityHeatmap quality_heatmap(const std::vector<QualitySeries>& series, const GridGeometry& geometry,
                                      double sigma = 0.5) {
  if (!(sigma > 0.0)) throw std::invalid_argument("heatmap sigma must be > 0");
  QualityHeatmap h{Raster<double>(geometry, 0.0), Raster<double>(geometry, 0.0)};
  const double norm = 1.0 / (2.0 * kPi * sigma * sigma);
  const double reach = 4.0 * sigma;
  for (const QualitySeries& s : series) {
    for (std::size_t k = 0; k < s.values.size(); ++k) {
      const double m = s.values[k];
      if (m == 0.0) continue;
      Raster<double>& target = m > 0.0 ? h.positive : h.negative;
      const double weight = std::abs(m) * norm;
      const Vec2 p = s.positions[k];
      const CellIndex lo = geometry.cell_of({p.x - reach, p.y - reach});
      const CellIndex hi = geometry.cell_of({p.x + reach, p.y + reach});
      for (int j = std::max(0, lo.j); j <= std::min(geometry.height - 1, hi.j); ++j)
        for (int i = std::max(0, lo.i); i <= std::min(geometry.width - 1, hi.i); ++i) {
          const Vec2 d = geometry.center(i, j) - p;
          const double r2 = d.x * d.x + d.y * d.y;
          if (r2 > reach * reach) continue;
          target.at(i, j) += weight * std::exp(-0.5 * r2 / (sigma * sigma));
        }
    }
  }
  return h;
}

}  // namespace navlab
