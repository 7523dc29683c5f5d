#include "pcsg/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace pcsg::metrics {

namespace {

void require_routes(const std::vector<RouteResult>& r) {
  if (r.empty()) throw std::invalid_argument("no route results to score");
}

double ipow(double base, unsigned n) {
  double r = 1.0;
  for (unsigned i = 0; i < n; ++i) r *= base;
  return r;
}

}  // namespace

InfractionCounts& InfractionCounts::operator+=(const InfractionCounts& o) {
  n_ped += o.n_ped;
  n_veh += o.n_veh;
  n_stat += o.n_stat;
  n_red += o.n_red;
  n_stop += o.n_stop;
  return *this;
}

InfractionCounts count_events(const std::vector<sim::InfractionEvent>& events) {
  InfractionCounts c;
  for (const auto& e : events) {
    switch (e.kind) {
      case sim::InfractionKind::kCollisionPedestrian: ++c.n_ped; break;
      case sim::InfractionKind::kCollisionVehicle: ++c.n_veh; break;
      case sim::InfractionKind::kCollisionStatic: ++c.n_stat; break;
      case sim::InfractionKind::kRedLight: ++c.n_red; break;
      case sim::InfractionKind::kStopSign: ++c.n_stop; break;
    }
  }
  return c;
}

double infraction_score(const InfractionCounts& c) {
  return ipow(kPedestrianFactor, c.n_ped) * ipow(kVehicleFactor, c.n_veh) * ipow(kStaticFactor, c.n_stat) *
         ipow(kRedLightFactor, c.n_red) * ipow(kStopSignFactor, c.n_stop);
}

double route_completion(const std::vector<RouteResult>& results) {
  require_routes(results);
  double s = 0.0;
  for (const auto& r : results) s += r.completion;
  return 100.0 * s / static_cast<double>(results.size());
}

double driving_score(const std::vector<RouteResult>& results) {
  require_routes(results);
  double s = 0.0;
  for (const auto& r : results) s += r.completion * infraction_score(r.counts);
  return 100.0 * s / static_cast<double>(results.size());
}

double mean_infraction_score(const std::vector<RouteResult>& results) {
  require_routes(results);
  double s = 0.0;
  for (const auto& r : results) s += infraction_score(r.counts);
  return s / static_cast<double>(results.size());
}

}  // namespace pcsg::metrics
