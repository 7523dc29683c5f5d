#include <cmath>
#include <random>

#include "doctest.h"
#include "pcsg/control.hpp"
#include "pcsg/evaluate.hpp"
#include "test_worlds.hpp"

using namespace pcsg;
using control::PidParams;
using control::PidState;
using control::pid_control;

TEST_CASE("straight waypoints at the target speed") {
  // Spacing 2 m over 0.5 s is 4 m/s.
  const auto out = pid_control({{0, 2}, {0, 4}, {0, 6}, {0, 8}}, 4.0, {});
  CHECK(out.controls.steer == 0.0);
  CHECK(out.controls.brake == 0.0);
  CHECK(out.controls.throttle >= 0.0);
  CHECK(out.controls.throttle < 0.1);
}

TEST_CASE("collapsed waypoints brake fully") {
  const auto out = pid_control({{0, 0}, {0, 0.01}, {0, 0.02}, {0, 0.03}}, 3.0, {});
  CHECK(out.controls.brake == 1.0);
  CHECK(out.controls.throttle == 0.0);
}

TEST_CASE("waypoints veering right steer right") {
  CHECK(pid_control({{1, 2}, {2, 4}}, 2.0, {}).controls.steer > 0.0);
  CHECK(pid_control({{-1, 2}, {-2, 4}}, 2.0, {}).controls.steer < 0.0);
}

TEST_CASE("fewer than two waypoints is rejected") {
  CHECK_THROWS_AS(pid_control({{0, 1}}, 0.0, {}), std::invalid_argument);
}

TEST_CASE("mirroring waypoints negates steer exactly") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> x(-3, 3), y(-1, 8), v(0, 8);
  for (int i = 0; i < 500; ++i) {
    std::vector<Waypoint> w, m;
    for (int t = 0; t < 4; ++t) {
      const Waypoint p{x(rng), y(rng)};
      w.push_back(p);
      m.push_back({-p.x, p.y});
    }
    const double speed = v(rng);
    const auto a = pid_control(w, speed, {});
    const auto b = pid_control(m, speed, {});
    CHECK(a.controls.steer == -b.controls.steer);
    CHECK(a.controls.throttle == b.controls.throttle);
    CHECK(a.controls.brake == b.controls.brake);
  }
}

TEST_CASE("outputs stay in range over a random control sequence") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> x(-20, 20), y(-20, 40), v(0, 15);
  PidState st;
  for (int i = 0; i < 2000; ++i) {
    std::vector<Waypoint> w;
    for (int t = 0; t < 4; ++t) w.push_back({x(rng), y(rng)});
    const auto out = pid_control(w, v(rng), st);
    st = out.state;
    const Controls& c = out.controls;
    REQUIRE(c.steer >= -1.0);
    REQUIRE(c.steer <= 1.0);
    REQUIRE(c.throttle >= 0.0);
    REQUIRE(c.throttle <= 1.0);
    REQUIRE(c.brake >= 0.0);
    REQUIRE(c.brake <= 1.0);
    REQUIRE(std::abs(st.lateral.integral) <= 2.0);
    REQUIRE(std::abs(st.longitudinal.integral) <= 2.0);
  }
}

TEST_CASE("integral term accumulates and is clamped") {
  PidState st;
  for (int i = 0; i < 50; ++i) st = pid_control({{3, 2}, {6, 4}}, 4.0, st).state;
  CHECK(st.lateral.integral == doctest::Approx(2.0));
}

TEST_CASE("expert labels through the controller finish a straight 100 m route") {
  auto world = testworld::straight_road();
  const sim::Route route = testworld::straight_route(0, 100);
  sim::SimState state = testworld::state_on(world, 0, 0);
  expert::update_progress(state, route);
  PidState pid;
  const double dt = 0.5;
  const expert::ExpertConfig cfg;
  const expert::ExpertMemory memory;
  for (int i = 0; i < 200 && !expert::route_finished(state, route); ++i) {
    const auto labels = eval::expert_waypoints(state, route, cfg, memory, dt);
    const auto out = pid_control({labels.begin(), labels.end()}, state.ego.speed, pid);
    pid = out.state;
    auto r = sim::step(state, out.controls, dt);
    CHECK(r.events.empty());
    state = std::move(r.state);
    expert::update_progress(state, route);
  }
  CHECK(sim::route_progress(state, route) >= 0.95);
}
