#pragma once

#include <cstdint>
#include <set>
#include <vector>

#include "pcsg/dataset.hpp"
#include "pcsg/scenario.hpp"
#include "pcsg/sensors.hpp"
#include "pcsg/townsim.hpp"

namespace pcsg::expert {

struct ExpertConfig {
  double cruise_speed = 6.0;       // m/s
  double curve_speed = 3.5;        // m/s through bends
  double approach_slowdown = 0.6;  // allowed m/s per meter to the stop point, near the line
  double comfort_decel = 2.0;      // m/s^2 for stopping profiles
  double stop_wait = 1.0;          // s at standstill at a stop sign
  double lookahead = 4.0;          // pure-pursuit minimum lookahead, m
  double lookahead_gain = 0.8;     // extra lookahead per m/s
  double light_margin = 2.5;       // vehicle center stops this far before a light's line
  double sign_margin = 1.5;        // and this far before a stop-sign line
  double follow_gap = 5.0;         // bumper gap kept to a lead vehicle, m
  bool run_red_lights = false;     // inject expert mistakes: ignore red lights

  std::uint64_t hash() const;
};

/// Per-episode memory of the scripted driver.
struct ExpertMemory {
  std::set<int> cleared_signs;
  double stopped_since = -1.0;  // sim time the ego came to rest in a stop-sign zone
  int committed_line = -1;      // stop line the driver has decided to stop at on yellow
};

Controls expert_action(const sim::SimState& state, const sim::Route& route, const ExpertConfig& cfg,
                       ExpertMemory& memory);

struct CollectOptions {
  sensors::SensorConfig sensors;
  sim::RuleParams rules;
  double goal_distance = 20.0;
  bool render = true;  // false skips sensor rendering (compliance runs)
};

struct EpisodeRun {
  data::Episode episode;
  std::vector<sim::InfractionEvent> events;
  double completion = 0.0;
  std::size_t steps = 0;
};

/// Drives the expert closed-loop at the scenario's dt and turns the trace into
/// frames. A collision aborts the run and marks the episode rejected.
EpisodeRun collect_episode(const sim::ScenarioConfig& scenario, std::uint64_t seed, const ExpertConfig& cfg,
                           const CollectOptions& opt = {});

/// Frame fields derived from a state; waypoints are left zero.
data::Frame observe(const sim::SimState& state, const sim::Route& route, const CollectOptions& opt);

/// Goal: the route point goal_distance ahead of the ego's progress, in ego frame.
Waypoint goal_point(const sim::SimState& state, const sim::Route& route, double goal_distance);

/// Advances progress bookkeeping after a step (ratchets state.progress_s).
void update_progress(sim::SimState& state, const sim::Route& route);

/// Episode end: the ego is within reach of the final route point.
bool route_finished(const sim::SimState& state, const sim::Route& route);

}  // namespace pcsg::expert
