#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "pcsg/autodiff.hpp"
#include "pcsg/townsim.hpp"

namespace pcsg::sensors {

// Default shapes are scaled down ~10x from a 400x300 three-camera rig and a
// 256x256 top-down grid.
struct SensorConfig {
  std::size_t cam_h = 32;
  std::size_t cam_w = 96;
  std::size_t horizon_row = 10;
  double focal_h = 27.712812921102035;  // 120 deg horizontal field of view over 96 px
  double focal_v = 24.0;
  double cam_forward = 1.0;  // camera ahead of the vehicle center, m
  double cam_height = 1.5;
  std::size_t bev = 64;      // BEV grid is bev x bev cells
  double bev_cell = 0.5;     // m; covers x in [-16, 16), y in [0, 32)
  double light_distance = 15.0;  // light head placed beyond its stop line, m
  double max_light_range = 45.0;
};

enum SemClass : std::uint8_t { kDrivable = 0, kNonDrivable = 1, kObject = 2, kOther = 3 };
inline constexpr std::size_t kSemClasses = 4;

/// Per-pixel class labels; conceptually a 4 x H x W one-hot grid.
struct SemGrid {
  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<std::uint8_t> labels;

  ad::Tensor one_hot() const;
  friend bool operator==(const SemGrid&, const SemGrid&) = default;
};

struct FrontView {
  ad::Tensor grid;  // 3 x H x W in [0, 1]
};

struct BevView {
  ad::Tensor grid;  // 2 x H x W: obstacle occupancy, drivable mask
};

/// Speed, throttle, steer and brake from the previous frame.
struct MeasurementVec {
  std::array<double, 4> values{};
  static MeasurementVec from(const VehicleState& v) {
    return {{v.speed, v.controls.throttle, v.controls.steer, v.controls.brake}};
  }
};

namespace palette {
inline constexpr std::array<double, 3> kSky{0.6, 0.8, 1.0};
inline constexpr std::array<double, 3> kGrass{0.2, 0.5, 0.2};
inline constexpr std::array<double, 3> kRoad{0.4, 0.4, 0.4};
inline constexpr std::array<double, 3> kStopLine{1.0, 1.0, 1.0};
inline constexpr std::array<double, 3> kVehicle{0.1, 0.2, 0.8};
inline constexpr std::array<double, 3> kSign{0.8, 0.0, 0.2};
inline constexpr std::array<double, 3> kRed{1.0, 0.0, 0.0};
inline constexpr std::array<double, 3> kYellow{1.0, 0.85, 0.0};
inline constexpr std::array<double, 3> kGreen{0.0, 1.0, 0.0};
}  // namespace palette

FrontView render_camera(const sim::SimState& state, const SensorConfig& cfg = {});
BevView render_lidar(const sim::SimState& state, const SensorConfig& cfg = {});
SemGrid render_front_seg_gt(const sim::SimState& state, const SensorConfig& cfg = {});
SemGrid render_topdown_seg_gt(const sim::SimState& state, const SensorConfig& cfg = {});

}  // namespace pcsg::sensors
