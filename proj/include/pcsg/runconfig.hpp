#pragma once

// Every tunable of a pipeline run in one value, with a key = value text form.
// A run directory always holds the resolved config it was produced with.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pcsg/attacks.hpp"
#include "pcsg/control.hpp"
#include "pcsg/expert.hpp"
#include "pcsg/model.hpp"
#include "pcsg/train.hpp"

namespace pcsg {

inline constexpr const char* kRunConfigHeader = "pcsg-run/1";

struct RunConfig {
  std::string name = "full";
  std::string scenarios;  // directory of .scn files; empty selects the built-in standard pack
  std::string episodes;   // episode directory read by train and by the dot attack

  // Collection: seeds data_seed_base .. data_seed_base + data_seeds - 1 per scenario.
  std::uint64_t data_seed_base = 1000;
  std::size_t data_seeds = 8;
  expert::ExpertConfig expert;
  double goal_distance = 20.0;

  model::ModelConfig model;
  std::uint64_t init_seed = 0;
  train::TrainConfig train;

  control::PidParams pid;
  std::vector<std::uint64_t> eval_seeds{0, 1, 2};
  unsigned workers = 1;

  double epsilon = 0.01;
  attacks::DotTrainConfig dot;
  double dot_radius = 6.0;
  std::uint64_t attack_data_seed = 5000;  // held-out seed for the dot attack set
};

/// Full text form: header line then one line per key, every key present.
std::string format_run_config(const RunConfig& cfg);

/// Starts from defaults and applies the given keys. Unknown keys, malformed
/// values and out-of-range values raise ConfigError naming the field.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const std::filesystem::path& path, const RunConfig& cfg);

/// Names of every recognised key, in output order.
std::vector<std::string> run_config_keys();

}  // namespace pcsg
