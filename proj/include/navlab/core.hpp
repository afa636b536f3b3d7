#pragma once

// Shared geometry helpers and error types.

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace navlab {

inline constexpr double kPi = std::numbers::pi;

/// Raised when input data (files, records, parameters) is malformed.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a named map, bank, log or raster does not exist.
class NotFoundError : public DataError {
 public:
  using DataError::DataError;
};

/// Raised when a task cannot be carried out, e.g. the goal lies inside a wall.
class InfeasibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Wraps an angle to (-pi, pi].
inline double wrap_angle(double a) {
  if (a > -kPi && a <= kPi) return a;
  a = std::remainder(a, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  return a;
}

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(Vec2 a, Vec2 b) = default;
  double norm() const { return std::hypot(x, y); }
};

/// Planar pose. Also used as a rigid transform (frame origin + orientation).
struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;

  Vec2 position() const { return {x, y}; }
  friend bool operator==(const Pose2&, const Pose2&) = default;
};

/// Expresses `p` (given in the parent frame) in the frame whose origin is `frame`.
inline Pose2 to_frame(const Pose2& frame, const Pose2& p) {
  const double c = std::cos(frame.theta), s = std::sin(frame.theta);
  const double dx = p.x - frame.x, dy = p.y - frame.y;
  return {c * dx + s * dy, -s * dx + c * dy, wrap_angle(p.theta - frame.theta)};
}

/// Inverse of to_frame: maps `p` given in `frame` back to the parent frame.
inline Pose2 from_frame(const Pose2& frame, const Pose2& p) {
  const double c = std::cos(frame.theta), s = std::sin(frame.theta);
  return {frame.x + c * p.x - s * p.y, frame.y + s * p.x + c * p.y,
          wrap_angle(frame.theta + p.theta)};
}

inline Vec2 rotate(Vec2 v, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return {c * v.x - s * v.y, s * v.x + c * v.y};
}

/// Goal given as (range, bearing) relative to a frame.
struct PolarGoal {
  double rho = 0.0;
  double phi = 0.0;

  Vec2 to_cartesian() const { return {rho * std::cos(phi), rho * std::sin(phi)}; }
  static PolarGoal from_cartesian(Vec2 v) { return {v.norm(), std::atan2(v.y, v.x)}; }
  friend bool operator==(const PolarGoal&, const PolarGoal&) = default;
};

inline bool all_finite(std::initializer_list<double> values) {
  for (double v : values)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace navlab
