#pragma once

#include <vector>

#include "pcsg/core.hpp"

namespace pcsg::control {

struct PidGains {
  double kp = 0.0;
  double ki = 0.0;
  double kd = 0.0;
  double integral_clamp = 2.0;
};

struct PidParams {
  PidGains lateral{2.5, 0.1, 0.2, 2.0};
  PidGains longitudinal{1.5, 0.05, 0.3, 2.0};
  double speed_scale = 1.0;      // multiplies the waypoint-implied target speed
  double brake_threshold = 0.4;  // m/s
  double brake_ratio = 1.1;      // over-speed braking starts when speed exceeds target by this factor
  double brake_gain = 0.2;       // over-speed brake = clamp(-gain * PID output, 0, 1); 0 disables
  double dt = 0.5;               // waypoint spacing in time, s
};

struct PidTerm {
  double integral = 0.0;
  double previous = 0.0;
  bool primed = false;
};

/// Controller memory; reset (default-construct) between episodes.
struct PidState {
  PidTerm lateral;
  PidTerm longitudinal;
};

struct PidOutput {
  Controls controls;
  PidState state;
};

/// Steer from the heading of the aim point (mean of the first two waypoints),
/// throttle from the speed implied by their spacing, full brake below the
/// threshold or when the current speed exceeds brake_ratio times the target.
/// Throws std::invalid_argument for fewer than two waypoints.
PidOutput pid_control(const std::vector<Waypoint>& waypoints, double current_speed, const PidState& state,
                      const PidParams& params = {});

}  // namespace pcsg::control
