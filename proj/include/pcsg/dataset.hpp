#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "pcsg/autodiff.hpp"
#include "pcsg/sensors.hpp"

namespace pcsg::data {

inline constexpr std::size_t kWaypoints = 4;

enum LightLabel : std::size_t { kLightRed = 0, kLightYellow = 1, kLightGreen = 2, kLightNone = 3 };

/// One 0.5 s timestep: observations, rule facts and the future trajectory.
struct Frame {
  sensors::FrontView camera;
  sensors::BevView lidar;
  sensors::SemGrid front_seg;
  sensors::SemGrid td_seg;
  sensors::MeasurementVec meas;
  std::array<double, 4> light_state{0, 0, 0, 1};  // one-hot {red, yellow, green, none}
  double stop_sign_flag = 0.0;                     // inside an uncleared stop-sign zone
  bool is_red = false;
  double y_stop = std::numeric_limits<double>::infinity();
  double delta_heading = 0.0;
  Waypoint goal;
  std::array<Waypoint, kWaypoints> waypoints{};

  friend bool operator==(const Frame& a, const Frame& b);
};

struct Episode {
  std::string scenario;
  std::uint64_t seed = 0;
  double dt = 0.5;
  std::uint64_t expert_hash = 0;
  bool rejected = false;
  std::vector<Frame> frames;

  friend bool operator==(const Episode&, const Episode&) = default;
};

inline constexpr std::uint16_t kEpisodeVersion = 1;

/// Throws binio::FormatError with a distinct kind per failure mode.
void write_episode(const std::filesystem::path& path, const Episode& ep);
Episode read_episode(const std::filesystem::path& path);

/// Reads every *.pcsg file of a directory in lexical order.
std::vector<Episode> read_episode_dir(const std::filesystem::path& dir);

struct FrameRef {
  std::size_t episode = 0;
  std::size_t frame = 0;
  friend bool operator==(const FrameRef&, const FrameRef&) = default;
};

struct Batch {
  std::vector<FrameRef> refs;
  std::vector<const Frame*> frames;
};

/// One epoch of shuffled batches; the final short batch is dropped.
/// Throws std::invalid_argument when batch_size < 2.
std::vector<Batch> make_batches(const std::vector<Episode>& episodes, std::size_t batch_size, std::uint64_t seed);

/// Splits whole episodes into (train, validation).
std::pair<std::vector<Episode>, std::vector<Episode>> split_episodes(std::vector<Episode> episodes,
                                                                     double val_fraction, std::uint64_t seed);

}  // namespace pcsg::data
