#include "pcsg/townsim.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

namespace pcsg::sim {

namespace {

double point_segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len2 = dot(ab, ab);
  double t = len2 > 0 ? dot(p - a, ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return norm(p - (a + t * ab));
}

bool segments_intersect(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
  const double d1 = cross(b - a, c - a);
  const double d2 = cross(b - a, d - a);
  const double d3 = cross(d - c, a - c);
  const double d4 = cross(d - c, b - c);
  return ((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0)) && d1 != 0 && d2 != 0 && d3 != 0 && d4 != 0;
}

std::array<Vec2, 4> corners(const Box& b) {
  const Vec2 f = unit_from_heading(b.heading);
  const Vec2 l{-f.y, f.x};
  const double hl = b.length / 2, hw = b.width / 2;
  return {b.center + hl * f + hw * l, b.center + hl * f - hw * l, b.center - hl * f - hw * l,
          b.center - hl * f + hw * l};
}

bool aligned(double a, double b, double tol) { return std::abs(heading_delta(a, b)) < tol; }

VehicleState npc_at(const NpcScript& npc, double t) {
  VehicleState v;
  const double len = npc.path.length();
  double s = npc.speed * std::max(0.0, t - npc.start_time);
  const bool parked = s >= len;
  s = std::min(s, len);
  const Vec2 p = npc.path.point_at(s);
  v.pose = Pose2D(p.x, p.y, npc.path.heading_at(s));
  v.speed = (parked || t < npc.start_time) ? 0.0 : npc.speed;
  return v;
}

}  // namespace

LightColor light_color_at(const TrafficLight& light, double t) {
  double cycle = 0.0;
  for (const auto& ph : light.schedule) cycle += ph.duration;
  if (light.schedule.empty() || !(cycle > 0)) throw std::invalid_argument("traffic light without a schedule");
  double tau = std::fmod(t + light.phase_offset, cycle);
  if (tau < 0) tau += cycle;
  double start = 0.0;
  for (const auto& ph : light.schedule) {
    if (tau < start + ph.duration) return ph.color;
    start += ph.duration;
  }
  return light.schedule.back().color;
}

bool boxes_overlap(const Box& a, const Box& b) {
  const auto ca = corners(a);
  const auto cb = corners(b);
  for (double h : {a.heading, a.heading + kPi / 2, b.heading, b.heading + kPi / 2}) {
    const Vec2 axis = unit_from_heading(h);
    double amin = 1e300, amax = -1e300, bmin = 1e300, bmax = -1e300;
    for (Vec2 p : ca) {
      amin = std::min(amin, dot(p, axis));
      amax = std::max(amax, dot(p, axis));
    }
    for (Vec2 p : cb) {
      bmin = std::min(bmin, dot(p, axis));
      bmax = std::max(bmax, dot(p, axis));
    }
    if (amax < bmin || bmax < amin) return false;
  }
  return true;
}

// ---- TownMap ----------------------------------------------------------------

void TownMap::finalize() {
  for (const auto& l : lights) {
    if (l.schedule.empty()) throw std::invalid_argument("light " + std::to_string(l.id) + " has no phases");
    for (const auto& ph : l.schedule)
      if (!(ph.duration > 0)) throw std::invalid_argument("light " + std::to_string(l.id) + " has a non-positive phase");
  }
  for (const auto& sl : stop_lines) {
    if (sl.control == StopControl::kLight) (void)light(sl.control_id);
    else (void)sign(sl.control_id);
  }
  for (const auto& lane : lanes) {
    if (lane.points.size() < 2) throw std::invalid_argument("lane " + std::to_string(lane.id) + " needs two points");
    const auto& p = lane.points;
    for (std::size_t i = 0; i + 1 < p.size(); ++i)
      for (std::size_t j = i + 2; j + 1 < p.size(); ++j)
        if (segments_intersect(p[i], p[i + 1], p[j], p[j + 1]))
          throw std::invalid_argument("lane " + std::to_string(lane.id) + " self-intersects");
  }

  double xmin = 1e300, ymin = 1e300, xmax = -1e300, ymax = -1e300;
  auto grow = [&](Vec2 p) {
    xmin = std::min(xmin, p.x);
    ymin = std::min(ymin, p.y);
    xmax = std::max(xmax, p.x);
    ymax = std::max(ymax, p.y);
  };
  for (const auto& l : lanes)
    for (Vec2 p : l.points) grow(p);
  for (const auto& in : intersections) grow(in.center);
  if (xmin > xmax) {
    xmin = ymin = 0;
    xmax = ymax = 0;
  }
  const double margin = 10.0;
  x0_ = xmin - margin;
  y0_ = ymin - margin;
  nx_ = static_cast<std::size_t>(std::ceil((xmax - xmin + 2 * margin) / kCell)) + 1;
  ny_ = static_cast<std::size_t>(std::ceil((ymax - ymin + 2 * margin) / kCell)) + 1;
  raster_.assign(nx_ * ny_, 0);

  auto cell_center = [&](std::size_t ix, std::size_t iy) {
    return Vec2{x0_ + (static_cast<double>(ix) + 0.5) * kCell, y0_ + (static_cast<double>(iy) + 0.5) * kCell};
  };
  auto mark_region = [&](double ax, double ay, double bx, double by, auto&& inside) {
    const auto ix0 = static_cast<std::size_t>(std::max(0.0, std::floor((ax - x0_) / kCell)));
    const auto iy0 = static_cast<std::size_t>(std::max(0.0, std::floor((ay - y0_) / kCell)));
    const auto ix1 = std::min(nx_ - 1, static_cast<std::size_t>(std::max(0.0, std::ceil((bx - x0_) / kCell))));
    const auto iy1 = std::min(ny_ - 1, static_cast<std::size_t>(std::max(0.0, std::ceil((by - y0_) / kCell))));
    for (std::size_t iy = iy0; iy <= iy1; ++iy)
      for (std::size_t ix = ix0; ix <= ix1; ++ix)
        if (inside(cell_center(ix, iy))) raster_[iy * nx_ + ix] = 1;
  };
  for (const auto& lane : lanes) {
    const double hw = lane.width / 2;
    for (std::size_t i = 0; i + 1 < lane.points.size(); ++i) {
      const Vec2 a = lane.points[i], b = lane.points[i + 1];
      mark_region(std::min(a.x, b.x) - hw, std::min(a.y, b.y) - hw, std::max(a.x, b.x) + hw,
                  std::max(a.y, b.y) + hw, [&](Vec2 p) { return point_segment_distance(p, a, b) <= hw; });
    }
  }
  for (const auto& in : intersections) {
    const double h = in.half_size;
    mark_region(in.center.x - h, in.center.y - h, in.center.x + h, in.center.y + h, [&](Vec2 p) {
      return std::abs(p.x - in.center.x) <= h && std::abs(p.y - in.center.y) <= h;
    });
  }
}

bool TownMap::drivable(Vec2 p) const {
  if (raster_.empty()) throw std::logic_error("TownMap::finalize() was not called");
  const double fx = std::floor((p.x - x0_) / kCell);
  const double fy = std::floor((p.y - y0_) / kCell);
  if (fx < 0 || fy < 0 || fx >= static_cast<double>(nx_) || fy >= static_cast<double>(ny_)) return false;
  return raster_[static_cast<std::size_t>(fy) * nx_ + static_cast<std::size_t>(fx)] != 0;
}

const TrafficLight& TownMap::light(int id) const {
  for (const auto& l : lights)
    if (l.id == id) return l;
  throw std::invalid_argument("unknown traffic light id " + std::to_string(id));
}

const StopSign& TownMap::sign(int id) const {
  for (const auto& s : signs)
    if (s.id == id) return s;
  throw std::invalid_argument("unknown stop sign id " + std::to_string(id));
}

// ---- Route ------------------------------------------------------------------

Route::Route(std::vector<Vec2> points) : points_(std::move(points)) {
  if (points_.empty()) throw std::invalid_argument("route needs at least one point");
  cum_.assign(points_.size(), 0.0);
  for (std::size_t i = 1; i < points_.size(); ++i) cum_[i] = cum_[i - 1] + norm(points_[i] - points_[i - 1]);
}

Vec2 Route::point_at(double s) const {
  if (points_.size() == 1) return points_[0];
  s = std::clamp(s, 0.0, length());
  auto it = std::upper_bound(cum_.begin(), cum_.end(), s);
  std::size_t i = it == cum_.begin() ? 0 : static_cast<std::size_t>(it - cum_.begin()) - 1;
  i = std::min(i, points_.size() - 2);
  const double seg = cum_[i + 1] - cum_[i];
  const double t = seg > 0 ? (s - cum_[i]) / seg : 0.0;
  return points_[i] + t * (points_[i + 1] - points_[i]);
}

double Route::heading_at(double s) const {
  if (points_.size() < 2) return 0.0;
  s = std::clamp(s, 0.0, length());
  auto it = std::upper_bound(cum_.begin(), cum_.end(), s);
  std::size_t i = it == cum_.begin() ? 0 : static_cast<std::size_t>(it - cum_.begin()) - 1;
  i = std::min(i, points_.size() - 2);
  // Skip zero-length segments.
  while (i + 1 < points_.size() - 1 && cum_[i + 1] == cum_[i]) ++i;
  const Vec2 d = points_[i + 1] - points_[i];
  return normalize_angle(std::atan2(d.y, d.x));
}

Route::Projection Route::project(Vec2 p, double s_lo, double s_hi) const {
  Projection best{std::clamp(s_lo, 0.0, length()), 1e300};
  if (points_.size() == 1) return {0.0, norm(p - points_[0])};
  for (std::size_t i = 0; i + 1 < points_.size(); ++i) {
    const double a_s = cum_[i], b_s = cum_[i + 1];
    if (b_s < s_lo || a_s > s_hi) continue;
    const Vec2 a = points_[i], ab = points_[i + 1] - points_[i];
    const double len = b_s - a_s;
    double t = len > 0 ? dot(p - a, ab) / (len * len) : 0.0;
    const double t_lo = len > 0 ? std::max(0.0, (s_lo - a_s) / len) : 0.0;
    const double t_hi = len > 0 ? std::min(1.0, (s_hi - a_s) / len) : 0.0;
    t = std::clamp(t, t_lo, std::max(t_lo, t_hi));
    const double d = norm(p - (a + t * ab));
    if (d < best.distance) best = {a_s + t * len, d};
  }
  return best;
}

// ---- simulation ------------------------------------------------------------

const char* to_string(InfractionKind k) {
  switch (k) {
    case InfractionKind::kCollisionPedestrian: return "collision_pedestrian";
    case InfractionKind::kCollisionVehicle: return "collision_vehicle";
    case InfractionKind::kCollisionStatic: return "collision_static";
    case InfractionKind::kRedLight: return "red_light";
    case InfractionKind::kStopSign: return "stop_sign";
  }
  return "unknown";
}

LightColor SimState::light_color(int light_id) const {
  const auto& lights = world->map.lights;
  for (std::size_t i = 0; i < lights.size(); ++i) {
    if (lights[i].id == light_id) {
      const double shift = i < light_shift.size() ? light_shift[i] : 0.0;
      return light_color_at(lights[i], time + shift);
    }
  }
  throw std::invalid_argument("unknown traffic light id " + std::to_string(light_id));
}

Box vehicle_box(const VehicleState& v, const SimParams& p) {
  return {v.pose.position(), p.vehicle_length, p.vehicle_width, v.pose.heading()};
}

StepResult step(const SimState& state, Controls controls, double dt) {
  if (!std::isfinite(controls.steer) || !std::isfinite(controls.throttle) || !std::isfinite(controls.brake)) {
    throw std::invalid_argument("non-finite ego controls");
  }
  if (!(dt > 0) || !std::isfinite(dt)) throw std::invalid_argument("step requires dt > 0");
  if (!state.world) throw std::invalid_argument("SimState without a world");

  const SimParams& P = state.params;
  const TownMap& map = state.world->map;
  StepResult out{state, {}};
  SimState& s = out.state;
  const Controls c = clamp_controls(controls);
  s.ego.controls = c;

  s.line_armed.resize(map.stop_lines.size(), 1);
  s.sign_status.resize(map.signs.size());
  s.npc_contact.resize(state.world->npcs.size(), 0);
  s.obstacle_contact.resize(map.obstacles.size(), 0);
  s.npcs.resize(state.world->npcs.size());

  auto emit = [&](InfractionKind k) { out.events.push_back({k, s.time, s.route_index}); };

  const int n = std::max(1, static_cast<int>(std::ceil(dt / P.substep - 1e-9)));
  const double h = dt / n;
  const double steer_angle = c.steer * P.max_steer_angle;
  for (int k = 0; k < n; ++k) {
    const double v0 = s.ego.speed;
    const double v1 = std::clamp(v0 + (P.a_max * c.throttle - P.b_max * c.brake - P.drag * v0) * h, 0.0, P.v_max);
    const double v_avg = 0.5 * (v0 + v1);
    const double yaw_rate = -v_avg / P.wheelbase * std::tan(steer_angle);
    const double mid_heading = s.ego.pose.heading() + 0.5 * yaw_rate * h;
    const Vec2 a = s.ego.pose.position();
    const Vec2 b = a + (v_avg * h) * unit_from_heading(mid_heading);
    s.ego.pose = Pose2D(b.x, b.y, s.ego.pose.heading() + yaw_rate * h);
    s.ego.speed = v1;
    s.time = state.time + dt * (k + 1) / n;

    for (std::size_t i = 0; i < s.npcs.size(); ++i) s.npcs[i] = npc_at(state.world->npcs[i], s.time);

    // Red-light crossings.
    for (std::size_t i = 0; i < map.stop_lines.size(); ++i) {
      const StopLine& sl = map.stop_lines[i];
      if (!s.line_armed[i]) {
        if (norm(b - sl.position) > P.rearm_distance) s.line_armed[i] = 1;
        continue;
      }
      const Vec2 f = unit_from_heading(sl.heading);
      const double da = dot(a - sl.position, f);
      const double db = dot(b - sl.position, f);
      if (!(da < 0.0 && db >= 0.0)) continue;
      const double t = da / (da - db);
      const Vec2 hit = a + t * (b - a);
      const Vec2 lat{-f.y, f.x};
      if (std::abs(dot(hit - sl.position, lat)) > sl.width / 2) continue;
      s.line_armed[i] = 0;
      if (sl.control == StopControl::kLight && s.light_color(sl.control_id) == LightColor::kRed) {
        emit(InfractionKind::kRedLight);
      }
    }

    // Stop-sign zones.
    for (const StopLine& sl : map.stop_lines) {
      if (sl.control != StopControl::kSign) continue;
      std::size_t si = 0;
      while (map.signs[si].id != sl.control_id) ++si;
      const StopSign& sign = map.signs[si];
      StopSignStatus& st = s.sign_status[si];
      const bool inside = norm(b - sign.position) <= sign.influence_radius &&
                          aligned(s.ego.pose.heading(), sl.heading, kPi / 3);
      if (inside && !st.inside) {
        st = {true, v1 <= P.eps_v, v1};
      } else if (inside) {
        st.min_speed = std::min(st.min_speed, v1);
        st.satisfied = st.satisfied || v1 <= P.eps_v;
      } else if (st.inside) {
        if (st.min_speed > P.eps_v) emit(InfractionKind::kStopSign);
        st.inside = false;
      }
    }

    // Collisions.
    const Box ego_box = vehicle_box(s.ego, P);
    for (std::size_t i = 0; i < s.npcs.size(); ++i) {
      const bool hit = boxes_overlap(ego_box, vehicle_box(s.npcs[i], P));
      if (hit && !s.npc_contact[i]) emit(InfractionKind::kCollisionVehicle);
      s.npc_contact[i] = hit;
    }
    for (std::size_t i = 0; i < map.obstacles.size(); ++i) {
      const bool hit = boxes_overlap(ego_box, map.obstacles[i]);
      if (hit && !s.obstacle_contact[i]) emit(InfractionKind::kCollisionStatic);
      s.obstacle_contact[i] = hit;
    }
    const bool off = !map.drivable(b);
    if (off && !s.offroad) emit(InfractionKind::kCollisionStatic);
    s.offroad = off;
  }
  return out;
}

// ---- route queries ----------------------------------------------------------

std::vector<std::pair<double, std::size_t>> route_stop_lines(const TownMap& map, const Route& route,
                                                             double lateral_tolerance) {
  std::vector<std::pair<double, std::size_t>> out;
  for (std::size_t i = 0; i < map.stop_lines.size(); ++i) {
    const StopLine& sl = map.stop_lines[i];
    const auto pr = route.project(sl.position);
    if (pr.distance <= lateral_tolerance && aligned(route.heading_at(pr.s), sl.heading, kPi / 4)) {
      out.emplace_back(pr.s, i);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

double progressed_arc(const SimState& state, const Route& route) {
  const auto pr = route.project(state.ego.pose.position(), state.progress_s - 2.0);
  return std::max(state.progress_s, pr.s);
}

double route_progress(const SimState& state, const Route& route) {
  const double len = route.length();
  if (len <= 0) return 1.0;
  return std::clamp(progressed_arc(state, route) / len, 0.0, 1.0);
}

RuleContext rule_context(const SimState& state, const Route& route, const RuleParams& params) {
  RuleContext ctx;
  const TownMap& map = state.map();
  const Pose2D& ego = state.ego.pose;
  const double s_ego = route.project(ego.position(), state.progress_s - 2.0).s;

  bool light_found = false;
  for (const auto& [s_line, idx] : route_stop_lines(map, route, params.lateral_tolerance)) {
    const double d = s_line - s_ego;
    const StopLine& sl = map.stop_lines[idx];
    if (sl.control == StopControl::kSign) {
      const StopSign& sign = map.sign(sl.control_id);
      if (d > 0 && d <= params.lookahead) ctx.stop_sign_ahead = true;
      std::size_t si = 0;
      while (map.signs[si].id != sign.id) ++si;
      const bool in_zone = norm(ego.position() - sign.position) <= sign.influence_radius &&
                           aligned(ego.heading(), sl.heading, kPi / 3);
      const bool done = si < state.sign_status.size() && state.sign_status[si].inside &&
                        state.sign_status[si].satisfied;
      if (in_zone && !done) ctx.is_stop_sign = true;
      continue;
    }
    if (light_found || !(d > 0 && d <= params.lookahead)) continue;
    light_found = true;
    const LightColor color = state.light_color(sl.control_id);
    ctx.light = color;
    if (color == LightColor::kRed) {
      ctx.is_red = true;
      ctx.y_stop = world_to_ego(sl.position, ego).y;
    }
  }
  const double ahead = state.ego.speed * params.dt;
  ctx.delta_heading = heading_delta(route.heading_at(s_ego), route.heading_at(s_ego + ahead));
  return ctx;
}

}  // namespace pcsg::sim
