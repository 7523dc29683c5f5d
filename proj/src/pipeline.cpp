#include "pcsg/pipeline.hpp"

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

namespace pcsg::pipeline {

std::vector<sim::ScenarioConfig> load_pack(const RunConfig& cfg) {
  if (cfg.scenarios.empty()) return sim::standard_pack();
  return sim::load_scenario_pack(cfg.scenarios);
}

expert::CollectOptions collect_options(const RunConfig& cfg) {
  expert::CollectOptions opt;
  opt.goal_distance = cfg.goal_distance;
  return opt;
}

std::vector<expert::EpisodeRun> collect(const RunConfig& cfg, const std::vector<sim::ScenarioConfig>& pack,
                                        std::uint64_t seed_base, std::size_t seeds) {
  const std::size_t jobs = pack.size() * seeds;
  std::vector<expert::EpisodeRun> runs(jobs);
  const auto opt = collect_options(cfg);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (std::size_t j = next++; j < jobs; j = next++) {
      try {
        runs[j] = expert::collect_episode(pack[j / seeds], seed_base + j % seeds, cfg.expert, opt);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(cfg.workers, static_cast<unsigned>(jobs)));
  std::vector<std::thread> pool;
  for (unsigned i = 1; i < n; ++i) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return runs;
}

std::vector<data::Episode> kept_episodes(std::vector<expert::EpisodeRun> runs) {
  std::vector<data::Episode> out;
  for (auto& r : runs)
    if (!r.episode.rejected) out.push_back(std::move(r.episode));
  return out;
}

model::Model make_model(const RunConfig& cfg) { return model::Model(cfg.model, cfg.init_seed); }

eval::EvalOptions eval_options(const RunConfig& cfg) {
  eval::EvalOptions opt;
  opt.pid = cfg.pid;
  opt.observe = collect_options(cfg);
  opt.epsilon = cfg.epsilon;
  opt.weights = cfg.train.weights;
  opt.labeler = cfg.expert;
  opt.labeler.run_red_lights = false;  // attack ground truth always follows the rules
  return opt;
}

}  // namespace pcsg::pipeline
