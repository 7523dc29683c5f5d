#include "pcsg/expert.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace pcsg::expert {

using namespace sim;

namespace {

double stop_profile(double distance, double decel, double slope) {
  if (distance <= 0.0) return 0.0;
  return std::min(std::sqrt(2.0 * decel * distance), slope * distance + 0.5);
}

// Speed limit from upcoming bends: the sharpest heading change in a sliding window.
double curve_limit(const Route& route, double s, const ExpertConfig& cfg) {
  double limit = cfg.cruise_speed;
  for (double ahead = 0.0; ahead <= 20.0; ahead += 2.0) {
    const double turn = std::abs(heading_delta(route.heading_at(s + ahead), route.heading_at(s + ahead + 6.0)));
    if (turn > 0.15) {
      const double v = std::sqrt(cfg.curve_speed * cfg.curve_speed + 2.0 * cfg.comfort_decel * ahead);
      limit = std::min(limit, v);
    }
  }
  return limit;
}

Controls track_speed(double v, double target) {
  Controls c;
  if (target < 0.05 && v < 0.5) {
    c.brake = 1.0;
    return c;
  }
  // Reach the target within roughly one frame.
  const double accel = (target - v) / 0.6;
  const double force = accel + 0.1 * v;  // cancel drag
  if (force >= 0) c.throttle = std::clamp(force / 3.0, 0.0, 1.0);
  else c.brake = std::clamp(-force / 8.0, 0.0, 1.0);
  return c;
}

}  // namespace

std::uint64_t ExpertConfig::hash() const {
  const double fields[] = {cruise_speed, curve_speed, approach_slowdown, comfort_decel, stop_wait, lookahead,
                           lookahead_gain, light_margin, sign_margin, follow_gap, run_red_lights ? 1.0 : 0.0};
  std::uint64_t h = 1469598103934665603ull;
  for (double f : fields) {
    std::uint64_t bits;
    std::memcpy(&bits, &f, sizeof bits);
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xff;
      h *= 1099511628211ull;
    }
  }
  return h;
}

Controls expert_action(const SimState& state, const Route& route, const ExpertConfig& cfg, ExpertMemory& memory) {
  const TownMap& map = state.map();
  const Pose2D& ego = state.ego.pose;
  const double v = state.ego.speed;
  const double s = route.project(ego.position(), state.progress_s - 2.0).s;

  // Lateral: pure pursuit on the route.
  const double ld = cfg.lookahead + cfg.lookahead_gain * v;
  const Waypoint aim = world_to_ego(route.point_at(s + ld), ego);
  const double dist2 = aim.x * aim.x + aim.y * aim.y;
  const double curvature = dist2 > 1e-9 ? 2.0 * aim.x / dist2 : 0.0;
  const double angle = std::atan(curvature * state.params.wheelbase);
  const double steer = std::clamp(angle / state.params.max_steer_angle, -1.0, 1.0);

  // Longitudinal: the most restrictive of all speed limits.
  double target = std::min(cfg.cruise_speed, curve_limit(route, s, cfg));

  for (const auto& [s_line, idx] : route_stop_lines(map, route)) {
    const double d_line = s_line - s;
    const StopLine& sl = map.stop_lines[idx];
    if (sl.control == StopControl::kLight) {
      if (d_line <= 0.0 || d_line > 40.0 || cfg.run_red_lights) continue;
      const LightColor color = state.light_color(sl.control_id);
      // Stop-point distance as of the end of this frame.
      const double d_stop = d_line - cfg.light_margin - 0.5 * v;
      bool stop = color == LightColor::kRed;
      // Stop on yellow only when it can be done comfortably, then stay committed.
      if (color == LightColor::kYellow) {
        stop = memory.committed_line == sl.id || (d_stop > 0 && v * v / (2.0 * 4.0) <= d_stop);
      }
      memory.committed_line = (stop && color != LightColor::kGreen) ? sl.id : -1;
      // Red with the stop point already passed: stop hard if still possible.
      if (stop && d_stop <= 0.0) stop = v * v / (2.0 * std::max(d_line - 0.5, 0.01)) <= state.params.b_max;
      if (stop) target = std::min(target, stop_profile(d_stop, cfg.comfort_decel, cfg.approach_slowdown));
      break;  // only the nearest light matters
    }
    if (memory.cleared_signs.count(sl.control_id)) continue;
    if (d_line < -2.0 || d_line > 40.0) continue;
    const double d_stop = d_line - cfg.sign_margin - 0.5 * v;
    target = std::min(target, stop_profile(d_stop, cfg.comfort_decel, cfg.approach_slowdown));
    const StopSign& sign = map.sign(sl.control_id);
    const bool in_zone = norm(ego.position() - sign.position) <= sign.influence_radius;
    if (in_zone && v <= 0.05) {
      if (memory.stopped_since < 0) memory.stopped_since = state.time;
      if (state.time - memory.stopped_since >= cfg.stop_wait) {
        memory.cleared_signs.insert(sl.control_id);
        memory.stopped_since = -1.0;
        target = std::min(cfg.cruise_speed, curve_limit(route, s, cfg));
      } else {
        target = 0.0;
      }
    } else {
      memory.stopped_since = -1.0;
    }
    break;
  }

  // Lead vehicles on the route ahead.
  for (const VehicleState& npc : state.npcs) {
    const auto pr = route.project(npc.pose.position(), s);
    if (pr.distance > 2.0 || pr.s <= s) continue;
    if (std::abs(heading_delta(npc.pose.heading(), route.heading_at(pr.s))) > kPi / 3) continue;
    const double gap = pr.s - s - state.params.vehicle_length - cfg.follow_gap;
    target = std::min(target, std::max(0.0, std::min(npc.speed + 0.5 * gap, stop_profile(gap, 3.0, 1.0) + npc.speed)));
  }

  Controls c = track_speed(v, target);
  c.steer = steer;
  return c;
}

void update_progress(SimState& state, const Route& route) { state.progress_s = progressed_arc(state, route); }

bool route_finished(const SimState& state, const Route& route) {
  return state.progress_s >= route.length() - 1.0;
}

Waypoint goal_point(const SimState& state, const Route& route, double goal_distance) {
  const double s = route.project(state.ego.pose.position(), state.progress_s - 2.0).s;
  return world_to_ego(route.point_at(s + goal_distance), state.ego.pose);
}

data::Frame observe(const SimState& state, const Route& route, const CollectOptions& opt) {
  data::Frame f;
  if (opt.render) {
    f.camera = sensors::render_camera(state, opt.sensors);
    f.lidar = sensors::render_lidar(state, opt.sensors);
    f.front_seg = sensors::render_front_seg_gt(state, opt.sensors);
    f.td_seg = sensors::render_topdown_seg_gt(state, opt.sensors);
  }
  f.meas = sensors::MeasurementVec::from(state.ego);
  const RuleContext ctx = rule_context(state, route, opt.rules);
  f.light_state = {0, 0, 0, 0};
  if (!ctx.light) f.light_state[data::kLightNone] = 1;
  else if (*ctx.light == LightColor::kRed) f.light_state[data::kLightRed] = 1;
  else if (*ctx.light == LightColor::kYellow) f.light_state[data::kLightYellow] = 1;
  else f.light_state[data::kLightGreen] = 1;
  f.stop_sign_flag = ctx.is_stop_sign ? 1.0 : 0.0;
  f.is_red = ctx.is_red;
  f.y_stop = ctx.y_stop;
  f.delta_heading = ctx.delta_heading;
  f.goal = goal_point(state, route, opt.goal_distance);
  return f;
}

EpisodeRun collect_episode(const ScenarioConfig& sc, std::uint64_t seed, const ExpertConfig& cfg,
                           const CollectOptions& opt) {
  EpisodeRun run;
  run.episode.scenario = sc.name;
  run.episode.seed = seed;
  run.episode.dt = sc.dt;
  run.episode.expert_hash = cfg.hash();

  SimState state = initial_state(sc, seed);
  update_progress(state, sc.route);
  ExpertMemory memory;
  std::vector<SimState> trace;
  const auto max_steps = static_cast<std::size_t>(std::ceil(sc.time_limit / sc.dt));
  while (trace.size() < max_steps && !route_finished(state, sc.route)) {
    trace.push_back(state);
    const Controls c = expert_action(state, sc.route, cfg, memory);
    auto r = step(state, c, sc.dt);
    state = std::move(r.state);
    update_progress(state, sc.route);
    bool crashed = false;
    for (const auto& e : r.events) {
      run.events.push_back(e);
      crashed = crashed || e.kind == InfractionKind::kCollisionVehicle || e.kind == InfractionKind::kCollisionStatic ||
                e.kind == InfractionKind::kCollisionPedestrian;
    }
    if (crashed) {
      run.episode.rejected = true;
      break;
    }
  }
  run.steps = trace.size();
  run.completion = route_progress(state, sc.route);

  if (trace.size() > data::kWaypoints) {
    for (std::size_t i = 0; i + data::kWaypoints < trace.size(); ++i) {
      data::Frame f = observe(trace[i], sc.route, opt);
      for (std::size_t k = 0; k < data::kWaypoints; ++k)
        f.waypoints[k] = world_to_ego(trace[i + 1 + k].ego.pose.position(), trace[i].ego.pose);
      run.episode.frames.push_back(std::move(f));
    }
  }
  return run;
}

}  // namespace pcsg::expert
