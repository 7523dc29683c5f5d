#pragma once

// Glue shared by the command-line tool and the acceptance runner.

#include <vector>

#include "pcsg/evaluate.hpp"
#include "pcsg/runconfig.hpp"

namespace pcsg::pipeline {

/// The scenario directory named by the config, or the built-in pack.
std::vector<sim::ScenarioConfig> load_pack(const RunConfig& cfg);

expert::CollectOptions collect_options(const RunConfig& cfg);

/// Expert runs for every (scenario, seed) pair, scenario-major. Runs are
/// spread over cfg.workers threads; the result does not depend on the count.
std::vector<expert::EpisodeRun> collect(const RunConfig& cfg, const std::vector<sim::ScenarioConfig>& pack,
                                        std::uint64_t seed_base, std::size_t seeds);

/// Kept episodes of a set of runs.
std::vector<data::Episode> kept_episodes(std::vector<expert::EpisodeRun> runs);

model::Model make_model(const RunConfig& cfg);

eval::EvalOptions eval_options(const RunConfig& cfg);

}  // namespace pcsg::pipeline
