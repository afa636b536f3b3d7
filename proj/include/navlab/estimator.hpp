#pragma once

// Reference recurrent estimator: an explicit stand-in for a navigation
// agent's hidden state. It fuses dead-reckoned odometry with localization,
// tracks velocities, keeps a short pose history and an egocentric occupancy
// accumulator built from scans.
//
// Latent layout (all in the episode frame):
//   [0..3]   x, y, cos(theta), sin(theta)      fused pose
//   [4..5]   v, omega                          velocity estimate
//   [6..7]   v cos(theta), v sin(theta)        planar velocity
//   [8..9]   dv/dt, domega/dt                  finite-difference accelerations
//   [10..]   ring buffer: x, y, cos, sin of the previous `history` poses,
//            most recent first
//   [..]     occupancy evidence, cells x cells, row b (robot +y) major, a
//            (robot +x) fastest; -1 free, +1 occupied, 0 unknown

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "navlab/planner.hpp"
#include "navlab/sensors.hpp"
#include "navlab/world.hpp"

namespace navlab {

struct EstimatorOptions {
  /// Localization gain of the complementary filter (0: odometry only).
  double kappa = 0.2;
  int history = 4;
  /// Occupancy accumulator: cells per side and cell size (m).
  int occ_cells = 30;
  double occ_resolution = 0.1;
  /// Evidence retained per step.
  double occ_decay = 0.9;
  double decision_dt = 1.0 / 3.0;
  /// Scan geometry used to integrate ranges; must match the world's.
  ScanConfig scan;
};

class ReferenceEstimator {
 public:
  static constexpr int kKinematicDims = 10;

  explicit ReferenceEstimator(EstimatorOptions opt = {}) : opt_(std::move(opt)) { zero(); }

  const EstimatorOptions& options() const { return opt_; }
  int latent_dim() const { return kKinematicDims + 4 * opt_.history + opt_.occ_cells * opt_.occ_cells; }
  /// Dimensions before the occupancy block.
  int state_dim() const { return kKinematicDims + 4 * opt_.history; }

  const Pose2& pose() const { return pose_; }
  double v() const { return v_; }
  double omega() const { return omega_; }
  const std::vector<double>& occupancy() const { return occ_; }

  void zero() {
    pose_ = {};
    v_ = omega_ = dv_ = domega_ = 0.0;
    ring_.assign(static_cast<std::size_t>(opt_.history), Pose2{});
    occ_.assign(static_cast<std::size_t>(opt_.occ_cells * opt_.occ_cells), 0.0);
    prev_odom_.reset();
    initialized_ = false;
  }

  /// The episode frame moved to `new_frame` (given in the old frame). A
  /// zeroed estimator has nothing to re-express.
  void on_frame_reset(const Pose2& new_frame) {
    if (!initialized_) return;
    pose_ = to_frame(new_frame, pose_);
    for (Pose2& p : ring_) p = to_frame(new_frame, p);
    prev_odom_.reset();
  }

  void update(const Observation& obs) {
    const Pose2 prev = pose_;
    Pose2 predicted;
    if (initialized_ && prev_odom_) {
      // Odometry increment expressed in the robot frame, applied to the belief.
      const Pose2 inc = to_frame(*prev_odom_, obs.odom_pose);
      predicted = from_frame(pose_, inc);
    } else {
      predicted = obs.odom_pose;
    }
    prev_odom_ = obs.odom_pose;
    initialized_ = true;
    const double k = opt_.kappa;
    pose_ = {predicted.x + k * (obs.loc_pose.x - predicted.x), predicted.y + k * (obs.loc_pose.y - predicted.y),
             wrap_angle(predicted.theta + k * wrap_angle(obs.loc_pose.theta - predicted.theta))};

    dv_ = (obs.odom_v - v_) / opt_.decision_dt;
    domega_ = (obs.odom_omega - omega_) / opt_.decision_dt;
    v_ = obs.odom_v;
    omega_ = obs.odom_omega;

    if (opt_.history > 0) {
      std::rotate(ring_.rbegin(), ring_.rbegin() + 1, ring_.rend());
      ring_.front() = prev;
    }
    if (!obs.scan.empty()) integrate_scan(to_frame(prev, pose_), obs.scan);
  }

  std::vector<double> latent() const {
    std::vector<double> h;
    h.reserve(static_cast<std::size_t>(latent_dim()));
    const double c = std::cos(pose_.theta), s = std::sin(pose_.theta);
    h.insert(h.end(), {pose_.x, pose_.y, c, s, v_, omega_, v_ * c, v_ * s, dv_, domega_});
    for (const Pose2& p : ring_) h.insert(h.end(), {p.x, p.y, std::cos(p.theta), std::sin(p.theta)});
    h.insert(h.end(), occ_.begin(), occ_.end());
    return h;
  }

  /// Robot-frame center of accumulator cell (a, b).
  Vec2 cell_center(int a, int b) const {
    const double half = 0.5 * opt_.occ_cells;
    return {(a + 0.5 - half) * opt_.occ_resolution, (b + 0.5 - half) * opt_.occ_resolution};
  }

 private:
  std::optional<std::pair<int, int>> cell_of(Vec2 p) const {
    const double half = 0.5 * opt_.occ_cells;
    const int a = static_cast<int>(std::floor(p.x / opt_.occ_resolution + half));
    const int b = static_cast<int>(std::floor(p.y / opt_.occ_resolution + half));
    if (a < 0 || b < 0 || a >= opt_.occ_cells || b >= opt_.occ_cells) return std::nullopt;
    return std::pair{a, b};
  }

  // `motion`: the current robot pose expressed in the previous robot frame.
  void integrate_scan(const Pose2& motion, const std::vector<double>& scan) {
    const int n = opt_.occ_cells;
    std::vector<double> moved(occ_.size(), 0.0);
    for (int b = 0; b < n; ++b)
      for (int a = 0; a < n; ++a) {
        const Vec2 c = cell_center(a, b);
        const Pose2 old = from_frame(motion, Pose2{c.x, c.y, 0.0});
        if (const auto src = cell_of(old.position()))
          moved[static_cast<std::size_t>(b * n + a)] =
              opt_.occ_decay * occ_[static_cast<std::size_t>(src->second * n + src->first)];
      }
    occ_ = std::move(moved);

    const int rays = static_cast<int>(scan.size());
    const double reach = 0.75 * n * opt_.occ_resolution;
    const double step = 0.5 * opt_.occ_resolution;
    for (int k = 0; k < rays; ++k) {
      const double bearing = ray_bearing(k, rays);
      if (in_dead_zone(bearing, opt_.scan)) continue;
      const double range = scan[static_cast<std::size_t>(k)];
      const Vec2 dir{std::cos(bearing), std::sin(bearing)};
      const double stop = std::min(range, reach);
      for (double d = 0.0; d < stop; d += step)
        if (const auto c = cell_of(d * dir)) occ_[static_cast<std::size_t>(c->second * n + c->first)] = -1.0;
      if (range < opt_.scan.range_max - 1e-9)
        if (const auto c = cell_of(range * dir)) occ_[static_cast<std::size_t>(c->second * n + c->first)] = 1.0;
    }
  }

  EstimatorOptions opt_;
  Pose2 pose_;
  double v_ = 0.0, omega_ = 0.0, dv_ = 0.0, domega_ = 0.0;
  std::vector<Pose2> ring_;
  std::vector<double> occ_;
  std::optional<Pose2> prev_odom_;
  bool initialized_ = false;
};

/// Occupancy of the cells x cells window around `pose` (world frame), laid
/// out like the estimator's accumulator: 1 occupied, 0 free.
inline std::vector<std::uint8_t> local_occupancy(const OccupancyGrid& grid, const Pose2& pose, int cells = 30,
                                                 double resolution = 0.1) {
  std::vector<std::uint8_t> out(static_cast<std::size_t>(cells * cells));
  const double half = 0.5 * cells;
  for (int b = 0; b < cells; ++b)
    for (int a = 0; a < cells; ++a) {
      const Pose2 w = from_frame(pose, Pose2{(a + 0.5 - half) * resolution, (b + 0.5 - half) * resolution, 0.0});
      out[static_cast<std::size_t>(b * cells + a)] = grid.occupied_at(w.position()) ? 1 : 0;
    }
  return out;
}

/// Expert that plans from the estimator's fused pose instead of ground truth.
/// The estimator is its memory: zeroing clears it, its latent is h_t.
class EstimatorExpertPolicy : public ExpertPolicy {
 public:
  EstimatorExpertPolicy(ExpertOptions expert = {}, EstimatorOptions estimator = {})
      : ExpertPolicy(std::move(expert)), est_(std::move(estimator)) {}

  const ReferenceEstimator& estimator() const { return est_; }

  void begin_episode(const EpisodeContext& ctx) override {
    ExpertPolicy::begin_episode(ctx);
    est_.zero();
  }
  void zero_memory() override { est_.zero(); }
  void on_frame_reset(const Pose2& new_frame) override {
    ExpertPolicy::on_frame_reset(new_frame);
    est_.on_frame_reset(new_frame);
  }
  std::optional<Pose2> estimated_pose() const override { return est_.pose(); }
  std::vector<double> latent() const override { return est_.latent(); }

 protected:
  RobotState belief_state(const PolicyInput& in) override {
    est_.update(in.obs);
    RobotState s;
    s.set_pose(from_frame(world_from_frame(), est_.pose()));
    s.v = est_.v();
    s.omega = est_.omega();
    return s;
  }

 private:
  ReferenceEstimator est_;
};

}  // namespace navlab
