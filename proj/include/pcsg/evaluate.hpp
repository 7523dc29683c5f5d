#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pcsg/attacks.hpp"
#include "pcsg/control.hpp"
#include "pcsg/expert.hpp"
#include "pcsg/metrics.hpp"
#include "pcsg/model.hpp"

namespace pcsg::eval {

enum class AttackKind { kNone, kFgsm, kDot };

struct EvalOptions {
  control::PidParams pid;
  expert::CollectOptions observe;
  AttackKind attack = AttackKind::kNone;
  double epsilon = 0.01;
  attacks::DotPattern pattern;
  losses::LossWeights weights;    // attack objective
  expert::ExpertConfig labeler;   // ground truth for the FGSM objective
};

struct RouteRun {
  metrics::RouteResult result;
  std::uint64_t seed = 0;
  std::size_t steps = 0;
  std::vector<sim::InfractionEvent> events;
};

/// Drives one route closed-loop with the model in eval mode and PID control.
RouteRun run_route(const model::Model& model, const sim::ScenarioConfig& sc, std::uint64_t seed,
                   const EvalOptions& opt = {});

/// Expert-rollout waypoints from a copy of the state, in its ego frame.
std::array<Waypoint, data::kWaypoints> expert_waypoints(const sim::SimState& state, const sim::Route& route,
                                                       const expert::ExpertConfig& cfg,
                                                       const expert::ExpertMemory& memory, double dt);

struct Aggregate {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation over seeds; 0 for one seed
};

struct EvalReport {
  std::vector<RouteRun> runs;  // seed-major, route order within a seed
  std::vector<std::uint64_t> seeds;
  Aggregate ds, rc, is;
  metrics::InfractionCounts totals;

  /// One record per route, then the aggregate block. Deterministic text.
  std::string format() const;
};

/// Every route of the pack under every seed; `workers` > 1 runs routes in
/// parallel without changing the result.
EvalReport evaluate(const model::Model& model, const std::vector<sim::ScenarioConfig>& pack,
                    const std::vector<std::uint64_t>& seeds, const EvalOptions& opt = {}, unsigned workers = 1);

/// Recomputes the aggregate block from per-route runs.
void aggregate(EvalReport& report);

/// Parses the route records of a formatted report (aggregate lines ignored).
EvalReport parse_report(const std::string& text);

}  // namespace pcsg::eval
