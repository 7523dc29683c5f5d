#include "pcsg/sensors.hpp"

#include <algorithm>
#include <cmath>

namespace pcsg::sensors {

namespace {

using sim::Box;
using sim::SimState;

struct Rect {
  double c0, c1, r0, r1;  // pixel-space extents, columns then rows
  double depth;
};

/// Vehicles and static obstacles in the scene.
std::vector<Box> scene_boxes(const SimState& s) {
  std::vector<Box> boxes;
  for (const auto& npc : s.npcs) boxes.push_back(sim::vehicle_box(npc, s.params));
  for (const auto& o : s.map().obstacles) boxes.push_back(o);
  return boxes;
}

bool inside_box(Vec2 p, const Box& b) {
  const Vec2 f = unit_from_heading(b.heading);
  const Vec2 d = p - b.center;
  return std::abs(dot(d, f)) <= b.length / 2 && std::abs(cross(f, d)) <= b.width / 2;
}

bool on_stop_line(Vec2 p, const sim::TownMap& map) {
  for (const auto& sl : map.stop_lines) {
    const Vec2 f = unit_from_heading(sl.heading);
    const Vec2 d = p - sl.position;
    if (std::abs(dot(d, f)) <= 0.3 && std::abs(cross(f, d)) <= sl.width / 2) return true;
  }
  return false;
}

struct Camera {
  const SensorConfig& cfg;
  Pose2D ego;

  // Camera-frame coordinates (right, forward) of a world point.
  Waypoint local(Vec2 p) const {
    Waypoint w = world_to_ego(p, ego);
    w.y -= cfg.cam_forward;
    return w;
  }
  double column(double x, double d) const { return static_cast<double>(cfg.cam_w) / 2 + cfg.focal_h * x / d; }
  double row(double height, double d) const {
    return static_cast<double>(cfg.horizon_row) + cfg.focal_v * (cfg.cam_height - height) / d;
  }

  /// Ground point hit by the center of pixel (r, c), if the ray looks down.
  std::optional<Vec2> ground(std::size_t r, std::size_t c) const {
    const double v = (static_cast<double>(r) + 0.5 - static_cast<double>(cfg.horizon_row)) / cfg.focal_v;
    if (v <= 0) return std::nullopt;
    const double d = cfg.cam_height / v;
    const double u = (static_cast<double>(c) + 0.5 - static_cast<double>(cfg.cam_w) / 2) / cfg.focal_h;
    return ego_to_world({u * d, d + cfg.cam_forward}, ego);
  }

  /// Screen rectangle of a box extruded to `height`, or nothing if behind.
  std::optional<Rect> project_box(const Box& b, double height) const {
    const Vec2 f = unit_from_heading(b.heading);
    const Vec2 l{-f.y, f.x};
    double cmin = 1e300, cmax = -1e300, dmin = 1e300;
    int visible = 0;
    for (double sx : {-1.0, 1.0}) {
      for (double sy : {-1.0, 1.0}) {
        const Waypoint w = local(b.center + (sx * b.length / 2) * f + (sy * b.width / 2) * l);
        if (w.y < 0.5) continue;
        ++visible;
        cmin = std::min(cmin, column(w.x, w.y));
        cmax = std::max(cmax, column(w.x, w.y));
        dmin = std::min(dmin, w.y);
      }
    }
    if (visible == 0) return std::nullopt;
    return Rect{cmin, cmax, row(height, dmin), row(0.0, dmin), dmin};
  }

  /// Fronto-parallel square of side `size` centred at `height` above p.
  std::optional<Rect> project_panel(Vec2 p, double height, double size) const {
    const Waypoint w = local(p);
    if (w.y < 0.5) return std::nullopt;
    const double c = column(w.x, w.y);
    const double half = cfg.focal_h * size / 2 / w.y;
    return Rect{c - half, c + half, row(height + size / 2, w.y), row(height - size / 2, w.y), w.y};
  }
};

void paint(ad::Tensor& img, const SensorConfig& cfg, const Rect& rc, const std::array<double, 3>& color,
           bool coverage) {
  const auto H = static_cast<double>(cfg.cam_h), W = static_cast<double>(cfg.cam_w);
  const double c0 = std::max(0.0, rc.c0), c1 = std::min(W, rc.c1);
  const double r0 = std::max(0.0, rc.r0), r1 = std::min(H, rc.r1);
  if (c0 >= c1 || r0 >= r1) return;
  const std::size_t plane = cfg.cam_h * cfg.cam_w;
  for (auto r = static_cast<std::size_t>(r0); r < cfg.cam_h && static_cast<double>(r) < r1; ++r) {
    const double fr = std::min(r1, r + 1.0) - std::max(r0, static_cast<double>(r));
    for (auto c = static_cast<std::size_t>(c0); c < cfg.cam_w && static_cast<double>(c) < c1; ++c) {
      const double fc = std::min(c1, c + 1.0) - std::max(c0, static_cast<double>(c));
      const double a = coverage ? std::clamp(fr * fc, 0.0, 1.0) : 1.0;
      if (a <= 0) continue;
      for (std::size_t ch = 0; ch < 3; ++ch) {
        double& px = img[ch * plane + r * cfg.cam_w + c];
        px = (1.0 - a) * px + a * color[ch];
      }
    }
  }
}

const std::array<double, 3>& light_rgb(sim::LightColor c) {
  switch (c) {
    case sim::LightColor::kRed: return palette::kRed;
    case sim::LightColor::kYellow: return palette::kYellow;
    case sim::LightColor::kGreen: return palette::kGreen;
  }
  return palette::kRed;
}

bool faces_ego(const sim::StopLine& sl, const Pose2D& ego) {
  return std::abs(heading_delta(ego.heading(), sl.heading)) < kPi / 3;
}

// Cells of the BEV grid in row-major order: row 0 is farthest ahead.
Vec2 bev_cell_world(const SensorConfig& cfg, const Pose2D& ego, std::size_t r, std::size_t c) {
  const double half = static_cast<double>(cfg.bev) * cfg.bev_cell / 2;
  const double x = -half + (static_cast<double>(c) + 0.5) * cfg.bev_cell;
  const double y = static_cast<double>(cfg.bev) * cfg.bev_cell - (static_cast<double>(r) + 0.5) * cfg.bev_cell;
  return ego_to_world({x, y}, ego);
}

}  // namespace

ad::Tensor SemGrid::one_hot() const {
  ad::Tensor t(ad::Shape{kSemClasses, h, w}, 0.0);
  const std::size_t plane = h * w;
  for (std::size_t i = 0; i < plane; ++i) t[labels[i] * plane + i] = 1.0;
  return t;
}

FrontView render_camera(const SimState& state, const SensorConfig& cfg) {
  const Camera cam{cfg, state.ego.pose};
  const std::size_t plane = cfg.cam_h * cfg.cam_w;
  ad::Tensor img(ad::Shape{3, cfg.cam_h, cfg.cam_w});
  const sim::TownMap& map = state.map();
  for (std::size_t r = 0; r < cfg.cam_h; ++r) {
    for (std::size_t c = 0; c < cfg.cam_w; ++c) {
      const auto g = cam.ground(r, c);
      const auto* color = &palette::kSky;
      if (g) {
        if (!map.drivable(*g)) color = &palette::kGrass;
        else if (on_stop_line(*g, map)) color = &palette::kStopLine;
        else color = &palette::kRoad;
      }
      for (std::size_t ch = 0; ch < 3; ++ch) img[ch * plane + r * cfg.cam_w + c] = (*color)[ch];
    }
  }

  struct Item {
    Rect rect;
    const std::array<double, 3>* color;
    bool coverage;
  };
  std::vector<Item> items;
  for (const Box& b : scene_boxes(state))
    if (auto rc = cam.project_box(b, 2.0)) items.push_back({*rc, &palette::kVehicle, false});
  for (const auto& sl : map.stop_lines) {
    if (!faces_ego(sl, state.ego.pose)) continue;
    const Vec2 f = unit_from_heading(sl.heading);
    if (sl.control == sim::StopControl::kLight) {
      const Vec2 head = sl.position + cfg.light_distance * f;
      auto rc = cam.project_panel(head, 4.5, 2.5);
      if (rc && rc->depth <= cfg.max_light_range) {
        items.push_back({*rc, &light_rgb(state.light_color(sl.control_id)), true});
      }
    } else {
      const Vec2 right{f.y, -f.x};
      auto rc = cam.project_panel(sl.position + 3.0 * right, 2.5, 1.0);
      if (rc && rc->depth <= cfg.max_light_range) items.push_back({*rc, &palette::kSign, true});
    }
  }
  std::stable_sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.rect.depth > b.rect.depth; });
  for (const Item& it : items) paint(img, cfg, it.rect, *it.color, it.coverage);
  return {std::move(img)};
}

SemGrid render_front_seg_gt(const SimState& state, const SensorConfig& cfg) {
  const Camera cam{cfg, state.ego.pose};
  SemGrid seg{cfg.cam_h, cfg.cam_w, std::vector<std::uint8_t>(cfg.cam_h * cfg.cam_w, kOther)};
  const sim::TownMap& map = state.map();
  for (std::size_t r = 0; r < cfg.cam_h; ++r) {
    for (std::size_t c = 0; c < cfg.cam_w; ++c) {
      if (const auto g = cam.ground(r, c)) seg.labels[r * cfg.cam_w + c] = map.drivable(*g) ? kDrivable : kNonDrivable;
    }
  }
  std::vector<std::pair<Rect, std::uint8_t>> items;
  for (const Box& b : scene_boxes(state)) {
    if (auto rc = cam.project_box(b, 2.0)) items.push_back({*rc, map.drivable(b.center) ? kObject : kOther});
  }
  std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.first.depth > b.first.depth; });
  for (const auto& [rc, label] : items) {
    const double c0 = std::max(0.0, rc.c0), c1 = std::min(static_cast<double>(cfg.cam_w), rc.c1);
    const double r0 = std::max(0.0, rc.r0), r1 = std::min(static_cast<double>(cfg.cam_h), rc.r1);
    for (auto r = static_cast<std::size_t>(r0); r < cfg.cam_h && static_cast<double>(r) < r1; ++r)
      for (auto c = static_cast<std::size_t>(c0); c < cfg.cam_w && static_cast<double>(c) < c1; ++c)
        seg.labels[r * cfg.cam_w + c] = label;
  }
  return seg;
}

BevView render_lidar(const SimState& state, const SensorConfig& cfg) {
  const std::size_t n = cfg.bev;
  ad::Tensor grid(ad::Shape{2, n, n});
  const auto boxes = scene_boxes(state);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      const Vec2 p = bev_cell_world(cfg, state.ego.pose, r, c);
      const bool occupied = std::any_of(boxes.begin(), boxes.end(), [&](const Box& b) { return inside_box(p, b); });
      grid[r * n + c] = occupied ? 1.0 : 0.0;
      grid[n * n + r * n + c] = state.map().drivable(p) ? 1.0 : 0.0;
    }
  }
  return {std::move(grid)};
}

SemGrid render_topdown_seg_gt(const SimState& state, const SensorConfig& cfg) {
  const std::size_t n = cfg.bev;
  SemGrid seg{n, n, std::vector<std::uint8_t>(n * n, kOther)};
  const auto boxes = scene_boxes(state);
  const double range = static_cast<double>(n) * cfg.bev_cell;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      const Vec2 p = bev_cell_world(cfg, state.ego.pose, r, c);
      if (norm(p - state.ego.pose.position()) > range) continue;
      const bool drivable = state.map().drivable(p);
      const bool occupied = std::any_of(boxes.begin(), boxes.end(), [&](const Box& b) { return inside_box(p, b); });
      std::uint8_t label = drivable ? kDrivable : kNonDrivable;
      if (occupied) label = drivable ? kObject : kOther;
      seg.labels[r * n + c] = label;
    }
  }
  return seg;
}

}  // namespace pcsg::sensors
