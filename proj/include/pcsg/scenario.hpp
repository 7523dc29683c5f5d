#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "pcsg/townsim.hpp"

namespace pcsg::sim {

inline constexpr const char* kScenarioHeader = "townsim/1";

struct ScenarioConfig {
  std::string name;
  std::shared_ptr<const World> world;
  Route route;
  double time_limit = 120.0;  // seconds
  double dt = 0.5;            // seconds per frame (2 FPS)
  double spawn_jitter = 0.5;  // max lateral spawn offset, meters
  bool randomize_lights = true;
};

/// Validates and parses scenario text (`townsim/1` header). Throws ConfigError.
ScenarioConfig parse_scenario(const std::string& text);
ScenarioConfig load_scenario(const std::filesystem::path& path);
std::string format_scenario(const ScenarioConfig& sc);
void save_scenario(const std::filesystem::path& path, const ScenarioConfig& sc);

/// Loads every *.scn file of a directory in lexical order.
std::vector<ScenarioConfig> load_scenario_pack(const std::filesystem::path& dir);

/// Episode start: ego at rest at the route start. The seed perturbs the
/// lateral spawn offset and, if enabled, every light's phase.
SimState initial_state(const ScenarioConfig& sc, std::uint64_t seed, int route_index = -1);

/// The ten-route grid-town pack used for data collection and evaluation.
std::vector<ScenarioConfig> standard_pack();

/// Replaces polyline corners with circular arcs of the given radius.
std::vector<Vec2> fillet(const std::vector<Vec2>& pts, double radius, double max_step = 1.0);

}  // namespace pcsg::sim
