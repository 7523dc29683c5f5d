#include <cmath>
#include <random>

#include "doctest.h"
#include "pcsg/scenario.hpp"
#include "pcsg/sensors.hpp"
#include "test_worlds.hpp"

using namespace testworld;
using namespace pcsg::sensors;

namespace {

std::array<double, 3> pixel(const FrontView& v, std::size_t r, std::size_t c) {
  const std::size_t plane = 32 * 96;
  return {v.grid[r * 96 + c], v.grid[plane + r * 96 + c], v.grid[2 * plane + r * 96 + c]};
}

SimState with_vehicle_ahead(double distance) {
  auto w = straight_road();
  SimState s = state_on(w, 0.0, 0.0);
  VehicleState npc;
  npc.pose = Pose2D(distance, 0, 0);
  s.npcs.push_back(npc);
  return s;
}

}  // namespace

TEST_CASE("empty map renders background only") {
  auto w = std::make_shared<World>();
  w->map.finalize();
  SimState s;
  s.world = w;
  s.ego.pose = Pose2D(3, 4, 1.0);
  const FrontView cam = render_camera(s);
  CHECK(cam.grid.shape() == pcsg::ad::Shape{3, 32, 96});
  for (std::size_t r = 0; r < 32; ++r)
    for (std::size_t c = 0; c < 96; ++c) {
      const auto p = pixel(cam, r, c);
      CHECK((p == palette::kSky || p == palette::kGrass));
    }
  const BevView bev = render_lidar(s);
  CHECK(bev.grid.shape() == pcsg::ad::Shape{2, 64, 64});
  for (double v : bev.grid.data()) CHECK(v == 0.0);
  for (const SemGrid& g : {render_front_seg_gt(s), render_topdown_seg_gt(s)})
    for (auto l : g.labels) CHECK(l != kObject);
}

TEST_CASE("vehicle five meters ahead") {
  const SimState s = with_vehicle_ahead(5.0);
  const BevView bev = render_lidar(s);
  // Cell (54, 32) has its center at ego-frame (0.25, 4.75), inside the box.
  CHECK(bev.grid[54 * 64 + 32] == 1.0);
  CHECK(bev.grid[54 * 64 + 10] == 0.0);
  // Near face 1.75 m ahead of the camera spans rows ~3..30 around column 48.
  CHECK(pixel(render_camera(s), 20, 48) == palette::kVehicle);
  CHECK(render_front_seg_gt(s).labels[20 * 96 + 48] == kObject);
}

TEST_CASE("top-down objects channel matches the footprint") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> along(4.0, 28.0), side(-1.0, 1.0), yaw(-0.3, 0.3);
  for (int trial = 0; trial < 20; ++trial) {
    SimState s = with_vehicle_ahead(along(rng));
    s.npcs[0].pose = Pose2D(s.npcs[0].pose.x(), side(rng), yaw(rng));
    const Box b = vehicle_box(s.npcs[0], s.params);
    const SemGrid seg = render_topdown_seg_gt(s);
    for (std::size_t r = 0; r < 64; ++r) {
      for (std::size_t c = 0; c < 64; ++c) {
        // Ego sits at the origin facing +x, so ego forward is world x.
        const double wx = 32.0 - (r + 0.5) * 0.5;
        const double wy = -(-16.0 + (c + 0.5) * 0.5);
        const double dx = wx - b.center.x, dy = wy - b.center.y;
        const double lon = dx * std::cos(b.heading) + dy * std::sin(b.heading);
        const double lat = -dx * std::sin(b.heading) + dy * std::cos(b.heading);
        const bool inside = std::abs(lon) <= b.length / 2 && std::abs(lat) <= b.width / 2;
        // Parts hanging over the road edge are not objects-in-drivable.
        const bool on_road = s.map().drivable({wx, wy});
        CHECK((seg.labels[r * 64 + c] == kObject) == (inside && on_road));
        if (inside && !on_road) CHECK(seg.labels[r * 64 + c] == kOther);
      }
    }
  }
}

TEST_CASE("light colour only changes light pixels") {
  const auto red = straight_road({20.0}, {{{LightColor::kRed, 100}}});
  const auto green = straight_road({20.0}, {{{LightColor::kGreen, 100}}});
  const SimState a = state_on(red, 0.0, 0.0);
  const SimState b = state_on(green, 0.0, 0.0);
  CHECK(render_lidar(a).grid == render_lidar(b).grid);
  CHECK(render_front_seg_gt(a) == render_front_seg_gt(b));
  CHECK(render_topdown_seg_gt(a) == render_topdown_seg_gt(b));
  const FrontView ca = render_camera(a), cb = render_camera(b);
  // Head 35 m down the road, 34 m from the camera: columns 47 +- 1.02, rows 7.0 to 8.76.
  int diffs = 0;
  for (std::size_t r = 0; r < 32; ++r)
    for (std::size_t c = 0; c < 96; ++c)
      if (pixel(ca, r, c) != pixel(cb, r, c)) {
        ++diffs;
        CHECK((r >= 7 && r <= 8 && c >= 46 && c <= 49));
      }
  CHECK(diffs > 0);
  CHECK(pixel(ca, 7, 47) == palette::kRed);
  CHECK(pixel(cb, 7, 47) == palette::kGreen);
}

TEST_CASE("random scenes: one-hot, range, determinism, shared information") {
  const auto pack = standard_pack();
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 12; ++trial) {
    const auto& sc = pack[trial % pack.size()];
    SimState s = initial_state(sc, trial);
    const double at = u(rng) * sc.route.length();
    const Vec2 p = sc.route.point_at(at);
    s.ego.pose = Pose2D(p.x, p.y, sc.route.heading_at(at));
    s.time = 40.0 * u(rng);
    const FrontView cam = render_camera(s);
    for (double v : cam.grid.data()) CHECK((v >= 0.0 && v <= 1.0));
    CHECK(render_camera(s).grid == cam.grid);
    const BevView bev = render_lidar(s);
    for (double v : bev.grid.data()) CHECK((v == 0.0 || v == 1.0));
    const SemGrid fs = render_front_seg_gt(s), ts = render_topdown_seg_gt(s);
    for (const SemGrid* g : {&fs, &ts}) {
      const auto oh = g->one_hot();
      const std::size_t plane = g->h * g->w;
      for (std::size_t i = 0; i < plane; ++i) {
        double sum = 0;
        for (std::size_t ch = 0; ch < kSemClasses; ++ch) sum += oh[ch * plane + i];
        CHECK(sum == 1.0);
      }
    }
    // Shift every light by a random amount: colours change, geometry does not.
    SimState t = s;
    for (double& sh : t.light_shift) sh += 20.0 * u(rng);
    CHECK(render_lidar(t).grid == bev.grid);
    CHECK(render_front_seg_gt(t) == fs);
    CHECK(render_topdown_seg_gt(t) == ts);
  }
}
