#include "pcsg/core.hpp"

#include <algorithm>

namespace pcsg {

Controls clamp_controls(Controls c) {
  return {std::clamp(c.steer, -1.0, 1.0), std::clamp(c.throttle, 0.0, 1.0),
          std::clamp(c.brake, 0.0, 1.0)};
}

// Forward axis f = (cos h, sin h), right axis r = (sin h, -cos h).
Waypoint world_to_ego(Vec2 p, const Pose2D& ego) {
  const Vec2 d = p - ego.position();
  const double c = std::cos(ego.heading());
  const double s = std::sin(ego.heading());
  return {d.x * s - d.y * c, d.x * c + d.y * s};
}

Vec2 ego_to_world(Waypoint w, const Pose2D& ego) {
  const double c = std::cos(ego.heading());
  const double s = std::sin(ego.heading());
  return {ego.x() + w.y * c + w.x * s, ego.y() + w.y * s - w.x * c};
}

double heading_delta(double a, double b) { return normalize_angle(b - a); }

}  // namespace pcsg
