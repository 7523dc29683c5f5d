#pragma once

// Synthetic frames with the model's default sensor shapes.

#include <random>
#include <vector>

#include "pcsg/dataset.hpp"
#include "pcsg/model.hpp"

namespace testframes {

using namespace pcsg;

inline data::Frame random_frame(std::mt19937_64& rng, const model::ModelConfig& cfg = {}) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> cls(0, 3);
  data::Frame f;
  f.camera.grid = ad::Tensor(ad::Shape{cfg.cam_c, cfg.cam_h, cfg.cam_w});
  for (double& v : f.camera.grid.data()) v = u(rng);
  f.lidar.grid = ad::Tensor(ad::Shape{cfg.lidar_c, cfg.lidar_h, cfg.lidar_w});
  for (double& v : f.lidar.grid.data()) v = u(rng) < 0.3 ? 1.0 : 0.0;
  f.front_seg = {cfg.front_seg_h, cfg.front_seg_w, {}};
  for (std::size_t i = 0; i < cfg.front_seg_h * cfg.front_seg_w; ++i)
    f.front_seg.labels.push_back(static_cast<std::uint8_t>(cls(rng)));
  f.td_seg = {cfg.td_seg_h, cfg.td_seg_w, {}};
  for (std::size_t i = 0; i < cfg.td_seg_h * cfg.td_seg_w; ++i)
    f.td_seg.labels.push_back(static_cast<std::uint8_t>(cls(rng)));
  f.meas.values = {6.0 * u(rng), u(rng), 2.0 * u(rng) - 1.0, 0.0};
  f.light_state = {0, 0, 0, 0};
  f.light_state[static_cast<std::size_t>(cls(rng))] = 1.0;
  f.stop_sign_flag = u(rng) < 0.5 ? 1.0 : 0.0;
  f.is_red = u(rng) < 0.5;
  if (f.is_red) f.y_stop = 1.0 + 6.0 * u(rng);
  f.delta_heading = u(rng) - 0.5;
  f.goal = {4.0 * u(rng) - 2.0, 10.0 + 10.0 * u(rng)};
  for (std::size_t t = 0; t < data::kWaypoints; ++t)
    f.waypoints[t] = {0.2 * static_cast<double>(t) * (u(rng) - 0.5), 2.0 * static_cast<double>(t + 1) * u(rng)};
  return f;
}

inline std::vector<data::Frame> random_frames(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<data::Frame> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(random_frame(rng));
  return out;
}

inline std::vector<const data::Frame*> pointers(const std::vector<data::Frame>& frames) {
  std::vector<const data::Frame*> out;
  for (const auto& f : frames) out.push_back(&f);
  return out;
}

}  // namespace testframes
