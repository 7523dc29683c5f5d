#pragma once

#include <cmath>
#include <numbers>

namespace pcsg {

inline constexpr double kPi = std::numbers::pi;

/// Wraps an angle into (-pi, pi].
inline double normalize_angle(double a) {
  double r = std::remainder(a, 2.0 * kPi);  // [-pi, pi]
  if (r <= -kPi) r += 2.0 * kPi;
  return r;
}

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(Vec2, Vec2) = default;
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
inline Vec2 unit_from_heading(double h) { return {std::cos(h), std::sin(h)}; }

/// World-frame pose. Heading is measured counter-clockwise from +x and kept
/// in (-pi, pi].
class Pose2D {
 public:
  Pose2D() = default;
  Pose2D(double x, double y, double heading) : x_(x), y_(y), heading_(normalize_angle(heading)) {}

  double x() const { return x_; }
  double y() const { return y_; }
  double heading() const { return heading_; }
  Vec2 position() const { return {x_, y_}; }

  friend bool operator==(const Pose2D&, const Pose2D&) = default;

 private:
  double x_ = 0.0;
  double y_ = 0.0;
  double heading_ = 0.0;
};

/// A point in the ego frame: x to the right, y forward.
struct Waypoint {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(Waypoint, Waypoint) = default;
};

inline double norm(Waypoint w) { return std::hypot(w.x, w.y); }

struct Controls {
  double steer = 0.0;     // [-1, 1], positive turns right
  double throttle = 0.0;  // [0, 1]
  double brake = 0.0;     // [0, 1]

  friend bool operator==(const Controls&, const Controls&) = default;
};

/// Clamps every field into its valid range.
Controls clamp_controls(Controls c);

struct VehicleState {
  Pose2D pose;
  double speed = 0.0;
  Controls controls;  // last applied

  friend bool operator==(const VehicleState&, const VehicleState&) = default;
};

Waypoint world_to_ego(Vec2 p, const Pose2D& ego);
Vec2 ego_to_world(Waypoint w, const Pose2D& ego);

/// Signed smallest rotation taking heading a to heading b, in (-pi, pi].
double heading_delta(double a, double b);

}  // namespace pcsg
