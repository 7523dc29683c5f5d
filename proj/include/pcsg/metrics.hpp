#pragma once

#include <string>
#include <vector>

#include "pcsg/townsim.hpp"

namespace pcsg::metrics {

struct InfractionCounts {
  unsigned n_ped = 0;
  unsigned n_veh = 0;
  unsigned n_stat = 0;
  unsigned n_red = 0;
  unsigned n_stop = 0;

  InfractionCounts& operator+=(const InfractionCounts& o);
  friend InfractionCounts operator+(InfractionCounts a, const InfractionCounts& b) { return a += b; }
  friend bool operator==(const InfractionCounts&, const InfractionCounts&) = default;
};

InfractionCounts count_events(const std::vector<sim::InfractionEvent>& events);

struct RouteResult {
  std::string route;
  double completion = 0.0;  // R_j in [0, 1]
  InfractionCounts counts;
};

// Per-occurrence multipliers.
inline constexpr double kPedestrianFactor = 0.5;
inline constexpr double kVehicleFactor = 0.60;
inline constexpr double kStaticFactor = 0.65;
inline constexpr double kRedLightFactor = 0.7;
inline constexpr double kStopSignFactor = 0.8;

double infraction_score(const InfractionCounts& c);
/// Mean completion, percent. Throws std::invalid_argument for no routes.
double route_completion(const std::vector<RouteResult>& results);
/// Mean of R_j * IS_j, percent.
double driving_score(const std::vector<RouteResult>& results);
/// Mean of IS_j (reported alongside DS and RC).
double mean_infraction_score(const std::vector<RouteResult>& results);

}  // namespace pcsg::metrics
