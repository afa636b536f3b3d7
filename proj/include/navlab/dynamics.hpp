#pragma once

// Second-order velocity dynamics of a differential-drive robot, the 28-command
// discrete action grid and collision-free rollouts.
//
// Each velocity axis follows
//
//     v'' = k (a - v) - (2 gamma / tau) v'
//
// with k = 1/tau (default) or k = 1/tau^2 (natural-frequency form), integrated
// by symplectic Euler at `substep_hz` while the command is held constant for
// one decision period 1/decision_hz.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "navlab/core.hpp"

namespace navlab {

enum class DynamicsMode { second_order, instant };

/// Stiffness coefficient of the velocity response: 1/tau or 1/tau^2.
enum class ResponseForm { inverse_tau, inverse_tau_squared };

struct DynParams {
  double tau_lin_acc = 0.3;
  double tau_lin_brake = 0.3;
  double tau_ang_acc = 0.3;
  double tau_ang_brake = 0.3;
  double gamma_lin_acc = 0.9;
  double gamma_lin_brake = 0.9;
  double gamma_ang_acc = 0.9;
  double gamma_ang_brake = 0.9;
  double v_max = 1.0;
  double omega_max = 1.0;
  int substep_hz = 30;
  int decision_hz = 3;
  ResponseForm response_form = ResponseForm::inverse_tau;

  double decision_dt() const { return 1.0 / decision_hz; }
  double substep_dt() const { return 1.0 / substep_hz; }
  int substeps_per_decision() const { return substep_hz / decision_hz; }

  /// Throws std::invalid_argument when an invariant is violated.
  void validate() const {
    for (double t : {tau_lin_acc, tau_lin_brake, tau_ang_acc, tau_ang_brake})
      if (!(t > 0.0) || !std::isfinite(t)) throw std::invalid_argument("DynParams: tau must be > 0");
    for (double g : {gamma_lin_acc, gamma_lin_brake, gamma_ang_acc, gamma_ang_brake})
      if (!(g > 0.0) || !std::isfinite(g)) throw std::invalid_argument("DynParams: gamma must be > 0");
    if (!(v_max > 0.0) || !std::isfinite(v_max)) throw std::invalid_argument("DynParams: v_max must be > 0");
    if (!(omega_max > 0.0) || !std::isfinite(omega_max))
      throw std::invalid_argument("DynParams: omega_max must be > 0");
    if (decision_hz <= 0 || substep_hz <= 0 || substep_hz % decision_hz != 0)
      throw std::invalid_argument("DynParams: substep_hz must be a positive multiple of decision_hz");
  }

  friend bool operator==(const DynParams&, const DynParams&) = default;
};

struct RobotState {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
  double v = 0.0;
  double omega = 0.0;
  double vdot = 0.0;
  double omegadot = 0.0;

  Pose2 pose() const { return {x, y, theta}; }
  Vec2 position() const { return {x, y}; }
  void set_pose(const Pose2& p) {
    x = p.x;
    y = p.y;
    theta = wrap_angle(p.theta);
  }
  bool finite() const { return all_finite({x, y, theta, v, omega, vdot, omegadot}); }
  friend bool operator==(const RobotState&, const RobotState&) = default;
};

inline constexpr int kNumLinearLevels = 4;
inline constexpr int kNumAngularLevels = 7;
inline constexpr int kNumMotionCommands = kNumLinearLevels * kNumAngularLevels;  // 28
/// STOP halts the robot (zero velocities) and requests episode termination.
inline constexpr int kStopIndex = kNumMotionCommands;

struct Command {
  int index = kStopIndex;
  double a_v = 0.0;
  double a_omega = 0.0;

  bool is_stop() const { return index == kStopIndex; }
  friend bool operator==(const Command&, const Command&) = default;
};

inline bool valid_command_index(int index) { return index >= 0 && index <= kStopIndex; }

/// Maps a command index to velocities under `params` (row-major, a_v outer).
inline Command resolve_command(int index, const DynParams& params) {
  if (!valid_command_index(index))
    throw std::invalid_argument("invalid command index " + std::to_string(index));
  if (index == kStopIndex) return {kStopIndex, 0.0, 0.0};
  const int lin = index / kNumAngularLevels;
  const int ang = index % kNumAngularLevels;
  return {index, params.v_max * lin / 3.0, params.omega_max * (ang - 3) / 3.0};
}

inline Command stop_command() { return {kStopIndex, 0.0, 0.0}; }

/// Index of the command with a_v = 0 and a_omega = 0 (not STOP).
inline constexpr int kIdleIndex = 3;

/// The 28 motion commands, scaled to the velocity range of `params`.
inline std::vector<Command> action_space(const DynParams& params) {
  params.validate();
  std::vector<Command> out;
  out.reserve(kNumMotionCommands);
  for (int i = 0; i < kNumMotionCommands; ++i) out.push_back(resolve_command(i, params));
  return out;
}

namespace detail {

struct AxisGains {
  double tau_acc, tau_brake, gamma_acc, gamma_brake;
};

// Magnitude of the fastest root of s^2 + b s + c.
inline double fastest_rate(double b, double c) {
  const double disc = b * b - 4.0 * c;
  if (disc >= 0.0) return 0.5 * (b + std::sqrt(disc));
  return std::sqrt(c);
}

// Number of inner steps that keeps dt * rate <= 0.5. Equals 1 for all
// parameter sets whose explicit step is already well inside the stability region.
inline int stable_subdivision(double dt, double b, double c) {
  const double r = dt * fastest_rate(b, c);
  if (r <= 0.5) return 1;
  return static_cast<int>(std::ceil(r / 0.5));
}

inline void advance_axis(double& v, double& vdot, double target, double limit, const AxisGains& g,
                         ResponseForm form, double dt) {
  const bool accelerating = std::abs(target) > std::abs(v) && target * v >= 0.0;
  const double tau = accelerating ? g.tau_acc : g.tau_brake;
  const double gamma = accelerating ? g.gamma_acc : g.gamma_brake;
  const double damping = 2.0 * gamma / tau;
  const double stiffness = form == ResponseForm::inverse_tau ? 1.0 / tau : 1.0 / (tau * tau);
  const int n = stable_subdivision(dt, damping, stiffness);
  const double h = dt / n;
  for (int i = 0; i < n; ++i) {
    vdot += h * (stiffness * (target - v) - damping * vdot);
    v += h * vdot;
    if (v > limit) {
      v = limit;
      vdot = 0.0;
    } else if (v < -limit) {
      v = -limit;
      vdot = 0.0;
    }
  }
}

}  // namespace detail

/// One substep of length params.substep_dt(): velocities first, then pose.
inline void integrate_substep(RobotState& s, const Command& cmd, const DynParams& params,
                              DynamicsMode mode) {
  const double dt = params.substep_dt();
  if (mode == DynamicsMode::instant) {
    s.v = std::clamp(cmd.a_v, -params.v_max, params.v_max);
    s.omega = std::clamp(cmd.a_omega, -params.omega_max, params.omega_max);
    s.vdot = 0.0;
    s.omegadot = 0.0;
  } else {
    detail::advance_axis(s.v, s.vdot, cmd.a_v, params.v_max,
                         {params.tau_lin_acc, params.tau_lin_brake, params.gamma_lin_acc,
                          params.gamma_lin_brake},
                         params.response_form, dt);
    detail::advance_axis(s.omega, s.omegadot, cmd.a_omega, params.omega_max,
                         {params.tau_ang_acc, params.tau_ang_brake, params.gamma_ang_acc,
                          params.gamma_ang_brake},
                         params.response_form, dt);
  }
  s.x += s.v * std::cos(s.theta) * dt;
  s.y += s.v * std::sin(s.theta) * dt;
  s.theta = wrap_angle(s.theta + s.omega * dt);
}

inline void check_command(const Command& cmd) {
  if (!valid_command_index(cmd.index))
    throw std::invalid_argument("invalid command index " + std::to_string(cmd.index));
  if (!std::isfinite(cmd.a_v) || !std::isfinite(cmd.a_omega))
    throw std::invalid_argument("non-finite command");
}

/// Advances one decision period. `on_substep(state, k)` is called after each
/// substep k = 1..n and may return false to stop early.
inline RobotState integrate_command(RobotState state, const Command& cmd, const DynParams& params,
                                    DynamicsMode mode,
                                    const std::function<bool(const RobotState&, int)>& on_substep) {
  check_command(cmd);
  if (!state.finite()) throw std::invalid_argument("non-finite robot state");
  const int n = params.substeps_per_decision();
  for (int k = 1; k <= n; ++k) {
    integrate_substep(state, cmd, params, mode);
    if (on_substep && !on_substep(state, k)) break;
  }
  return state;
}

inline RobotState integrate_command(const RobotState& state, const Command& cmd,
                                    const DynParams& params,
                                    DynamicsMode mode = DynamicsMode::second_order) {
  return integrate_command(state, cmd, params, mode, {});
}

/// Collision-free forward map applied to each command; returns p_1..p_T.
inline std::vector<RobotState> rollout_actions(const RobotState& p0, std::span<const Command> actions,
                                               const DynParams& params,
                                               DynamicsMode mode = DynamicsMode::second_order) {
  if (actions.empty()) throw std::invalid_argument("rollout_actions: empty action sequence");
  std::vector<RobotState> out;
  out.reserve(actions.size());
  RobotState s = p0;
  for (const Command& a : actions) {
    s = integrate_command(s, a, params, mode);
    out.push_back(s);
  }
  return out;
}

/// Same as above with commands given by index and resolved under `params`.
inline std::vector<RobotState> rollout_indices(const RobotState& p0, std::span<const int> indices,
                                               const DynParams& params,
                                               DynamicsMode mode = DynamicsMode::second_order) {
  std::vector<Command> cmds;
  cmds.reserve(indices.size());
  for (int i : indices) cmds.push_back(resolve_command(i, params));
  return rollout_actions(p0, cmds, params, mode);
}

inline const char* to_string(DynamicsMode m) {
  return m == DynamicsMode::instant ? "instant" : "second_order";
}

inline DynamicsMode parse_dynamics_mode(const std::string& s) {
  if (s == "instant") return DynamicsMode::instant;
  if (s == "second_order") return DynamicsMode::second_order;
  throw std::invalid_argument("unknown dynamics mode '" + s + "'");
}

}  // namespace navlab
