#include <random>

#include "doctest.h"
#include "pcsg/metrics.hpp"

using namespace pcsg::metrics;

TEST_CASE("infraction score examples") {
  CHECK(infraction_score({}) == 1.0);
  CHECK(infraction_score({.n_red = 1}) == 0.7);
  CHECK(infraction_score({.n_red = 1, .n_stop = 2}) == doctest::Approx(0.448).epsilon(1e-15));
  CHECK(infraction_score({.n_ped = 1}) == 0.5);
  CHECK(infraction_score({.n_veh = 1}) == 0.6);
  CHECK(infraction_score({.n_stat = 1}) == 0.65);
  CHECK(infraction_score({.n_stop = 1}) == 0.8);
}

TEST_CASE("route completion and driving score examples") {
  CHECK(route_completion({{"a", 1.0, {}}, {"b", 1.0, {}}}) == 100.0);
  CHECK(route_completion({{"a", 1.0, {}}, {"b", 0.5, {}}}) == 75.0);
  CHECK(route_completion({{"a", 0.863, {}}}) == doctest::Approx(86.3).epsilon(1e-14));
  CHECK(driving_score({{"a", 1.0, {.n_red = 1}}}) == doctest::Approx(70.0).epsilon(1e-14));
  CHECK(driving_score({{"a", 1.0, {}}, {"b", 1.0, {}}}) == 100.0);
  CHECK(driving_score({{"a", 1.0, {.n_ped = 1}}, {"b", 0.5, {}}}) == 50.0);
  CHECK(mean_infraction_score({{"a", 1.0, {.n_ped = 1}}, {"b", 0.5, {}}}) == 0.75);
}

TEST_CASE("empty result lists are rejected") {
  CHECK_THROWS_AS(route_completion({}), std::invalid_argument);
  CHECK_THROWS_AS(driving_score({}), std::invalid_argument);
  CHECK_THROWS_AS(mean_infraction_score({}), std::invalid_argument);
}

TEST_CASE("counting simulator events") {
  using pcsg::sim::InfractionKind;
  std::vector<pcsg::sim::InfractionEvent> ev;
  for (auto k : {InfractionKind::kRedLight, InfractionKind::kRedLight, InfractionKind::kStopSign,
                 InfractionKind::kCollisionVehicle, InfractionKind::kCollisionStatic,
                 InfractionKind::kCollisionPedestrian}) {
    pcsg::sim::InfractionEvent e;
    e.kind = k;
    ev.push_back(e);
  }
  const InfractionCounts want{.n_ped = 1, .n_veh = 1, .n_stat = 1, .n_red = 2, .n_stop = 1};
  CHECK(count_events(ev) == want);
}

namespace {
InfractionCounts random_counts(std::mt19937_64& rng) {
  std::uniform_int_distribution<unsigned> d(0, 4);
  return {d(rng), d(rng), d(rng), d(rng), d(rng)};
}
}  // namespace

TEST_CASE("score properties over random counts") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> r(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const auto a = random_counts(rng);
    const auto b = random_counts(rng);
    CHECK(infraction_score(a + b) == doctest::Approx(infraction_score(a) * infraction_score(b)).epsilon(1e-12));

    auto more = a;
    ++more.n_stop;
    CHECK(infraction_score(more) < infraction_score(a));

    std::vector<RouteResult> rs{{"x", r(rng), a}, {"y", r(rng), b}};
    CHECK(driving_score(rs) <= route_completion(rs));
    const double is = infraction_score(a);
    CHECK(is > 0.0);
    CHECK(is <= 1.0);
  }
}
