#include "pcsg/control.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pcsg::control {

namespace {

double pid_step(const PidGains& g, PidTerm& term, double error) {
  term.integral = std::clamp(term.integral + error, -g.integral_clamp, g.integral_clamp);
  const double derivative = term.primed ? error - term.previous : 0.0;
  term.previous = error;
  term.primed = true;
  return g.kp * error + g.ki * term.integral + g.kd * derivative;
}

}  // namespace

PidOutput pid_control(const std::vector<Waypoint>& w, double current_speed, const PidState& state,
                      const PidParams& params) {
  if (w.size() < 2) throw std::invalid_argument("pid_control needs at least two waypoints");
  PidOutput out{{}, state};

  const Waypoint aim{(w[0].x + w[1].x) / 2, (w[0].y + w[1].y) / 2};
  const double heading_error = std::atan2(aim.x, aim.y);
  out.controls.steer = std::clamp(pid_step(params.lateral, out.state.lateral, heading_error), -1.0, 1.0);

  const double target = std::hypot(w[1].x - w[0].x, w[1].y - w[0].y) / params.dt * params.speed_scale;
  out.controls = {out.controls.steer, 0.0, 0.0};
  if (target < params.brake_threshold) {
    out.controls.brake = 1.0;
    out.state.longitudinal = {};
  } else {
    const double u = pid_step(params.longitudinal, out.state.longitudinal, target - current_speed);
    out.controls.throttle = std::clamp(u, 0.0, 1.0);
    if (current_speed > params.brake_ratio * target) {
      out.controls.throttle = 0.0;
      out.controls.brake = std::clamp(-params.brake_gain * u, 0.0, 1.0);
    }
  }
  return out;
}

}  // namespace pcsg::control
