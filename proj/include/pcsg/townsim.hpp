#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pcsg/core.hpp"

namespace pcsg::sim {

enum class LightColor { kRed, kYellow, kGreen };

struct LightPhase {
  LightColor color = LightColor::kRed;
  double duration = 1.0;  // seconds, > 0
};

struct TrafficLight {
  int id = 0;
  std::vector<LightPhase> schedule;
  double phase_offset = 0.0;  // seconds
};

/// Phase lookup on the cyclic schedule; phase intervals are [start, end).
LightColor light_color_at(const TrafficLight& light, double t);

struct Lane {
  int id = 0;
  double width = 3.5;
  std::vector<Vec2> points;  // centerline
};

struct Intersection {
  Vec2 center;
  double half_size = 3.5;  // square junction area
};

enum class StopControl { kLight, kSign };

struct StopLine {
  int id = 0;
  Vec2 position;       // center of the line, on the lane centerline
  double heading = 0;  // direction of travel it governs
  double width = 3.5;
  StopControl control = StopControl::kLight;
  int control_id = 0;  // TrafficLight::id or StopSign::id
};

struct StopSign {
  int id = 0;
  Vec2 position;
  double influence_radius = 4.0;
};

struct Box {
  Vec2 center;
  double length = 4.5;
  double width = 2.0;
  double heading = 0.0;
};

bool boxes_overlap(const Box& a, const Box& b);

class TownMap {
 public:
  std::vector<Lane> lanes;
  std::vector<Intersection> intersections;
  std::vector<StopLine> stop_lines;
  std::vector<TrafficLight> lights;
  std::vector<StopSign> signs;
  std::vector<Box> obstacles;

  /// Checks references and builds the drivable-area raster. Must be called
  /// once after the fields are populated; throws std::invalid_argument.
  void finalize();

  bool drivable(Vec2 p) const;
  const TrafficLight& light(int id) const;
  const StopSign& sign(int id) const;
  bool finalized() const { return !raster_.empty(); }

 private:
  static constexpr double kCell = 0.25;
  double x0_ = 0, y0_ = 0;
  std::size_t nx_ = 0, ny_ = 0;
  std::vector<std::uint8_t> raster_;
};

/// Ordered polyline the ego should follow, with cumulative arc length.
class Route {
 public:
  Route() = default;
  explicit Route(std::vector<Vec2> points);

  const std::vector<Vec2>& points() const { return points_; }
  double length() const { return cum_.empty() ? 0.0 : cum_.back(); }
  Vec2 point_at(double s) const;
  double heading_at(double s) const;

  struct Projection {
    double s = 0.0;
    double distance = 0.0;  // unsigned distance to the polyline
  };
  /// Closest point with arc length inside [s_lo, s_hi].
  Projection project(Vec2 p, double s_lo = 0.0, double s_hi = 1e300) const;

 private:
  std::vector<Vec2> points_;
  std::vector<double> cum_;
};

/// Moves along a path at constant speed once start_time has passed, then
/// stays parked at its end.
struct NpcScript {
  double speed = 0.0;
  double start_time = 0.0;
  Route path;
};

struct SimParams {
  double a_max = 3.0;      // m/s^2 at full throttle
  double b_max = 8.0;      // m/s^2 at full brake
  double v_max = 12.0;     // m/s
  double wheelbase = 2.5;  // m
  double drag = 0.1;       // 1/s
  double max_steer_angle = 0.7;  // rad at |steer| = 1
  double substep = 0.1;    // s
  double eps_v = 0.5;      // stop-sign speed threshold, m/s
  double vehicle_length = 4.5;
  double vehicle_width = 2.0;
  double rearm_distance = 30.0;  // a crossed stop line counts again beyond this

  friend bool operator==(const SimParams&, const SimParams&) = default;
};

enum class InfractionKind { kCollisionPedestrian, kCollisionVehicle, kCollisionStatic, kRedLight, kStopSign };

const char* to_string(InfractionKind k);

struct InfractionEvent {
  InfractionKind kind;
  double time = 0.0;
  int route_index = -1;

  friend bool operator==(const InfractionEvent&, const InfractionEvent&) = default;
};

struct StopSignStatus {
  bool inside = false;
  bool satisfied = false;  // reached <= eps_v during the current visit
  double min_speed = 0.0;

  friend bool operator==(const StopSignStatus&, const StopSignStatus&) = default;
};

struct World {
  TownMap map;
  std::vector<NpcScript> npcs;
};

struct SimState {
  double time = 0.0;
  VehicleState ego;
  std::vector<VehicleState> npcs;
  std::shared_ptr<const World> world;
  std::uint64_t rng_seed = 0;
  int route_index = -1;
  SimParams params;

  // Per-light phase shift drawn from the seed, indexed like world->map.lights.
  std::vector<double> light_shift;
  // Infraction bookkeeping, indexed like the corresponding map/world vectors.
  std::vector<std::uint8_t> line_armed;
  std::vector<StopSignStatus> sign_status;
  std::vector<std::uint8_t> npc_contact;
  std::vector<std::uint8_t> obstacle_contact;
  bool offroad = false;

  // Ratcheted arc length along the episode route.
  double progress_s = 0.0;

  LightColor light_color(int light_id) const;
  const TownMap& map() const { return world->map; }

  friend bool operator==(const SimState&, const SimState&) = default;
};

/// Ego box of the given vehicle state.
Box vehicle_box(const VehicleState& v, const SimParams& p);

struct StepResult {
  SimState state;
  std::vector<InfractionEvent> events;
};

/// Advances the world by dt under the ego controls. Throws
/// std::invalid_argument for non-finite controls or dt <= 0.
StepResult step(const SimState& state, Controls controls, double dt);

/// Per-frame rule facts along the route.
struct RuleContext {
  bool is_red = false;
  double y_stop = std::numeric_limits<double>::infinity();  // +inf: no governing line ahead
  bool is_stop_sign = false;
  double delta_heading = 0.0;
  // Classification labels.
  std::optional<LightColor> light;  // nearest light-governed line ahead within lookahead
  bool stop_sign_ahead = false;
};

struct RuleParams {
  double lookahead = 20.0;
  double dt = 0.5;
  double lateral_tolerance = 2.5;  // stop line must sit this close to the route
};

RuleContext rule_context(const SimState& state, const Route& route, const RuleParams& params = {});

/// Route progress in [0, 1] with ratchet semantics relative to state.progress_s.
double route_progress(const SimState& state, const Route& route);

/// Arc length route_progress would ratchet to.
double progressed_arc(const SimState& state, const Route& route);

/// On-route stop lines as (arc length, index into map.stop_lines).
std::vector<std::pair<double, std::size_t>> route_stop_lines(const TownMap& map, const Route& route,
                                                             double lateral_tolerance = 2.5);

}  // namespace pcsg::sim
