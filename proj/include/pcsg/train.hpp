#pragma once

#include <cstdint>
#include <ostream>
#include <vector>

#include "pcsg/dataset.hpp"
#include "pcsg/losses.hpp"
#include "pcsg/model.hpp"
#include "pcsg/optim.hpp"

namespace pcsg::train {

struct TrainConfig {
  std::size_t epochs = 12;
  std::size_t batch_size = 32;
  ad::AdamConfig adam{.lr = 1e-3};
  losses::LossWeights weights;
  std::uint64_t seed = 0;  // batch order and reparameterization noise
  // Cosine decay from adam.lr down to lr_floor * adam.lr over the run; 1 keeps the rate constant.
  double lr_floor = 0.0;
};

/// Learning rate of a step under the cosine schedule.
double scheduled_lr(const TrainConfig& cfg, std::size_t step, std::size_t total_steps);

struct EpochSummary {
  std::size_t epoch = 0;
  std::size_t steps = 0;
  double mean_total = 0.0;
  std::vector<losses::Term> mean_terms;
};

/// One optimizer step on a batch; returns the loss breakdown before the update.
losses::LossResult train_step(model::Model& model, const std::vector<const data::Frame*>& frames,
                              const losses::LossWeights& weights, ad::AdamState& adam,
                              const ad::AdamConfig& adam_cfg, std::mt19937_64& rng);

/// Full training run. When `log` is set, one line per step is written:
/// "epoch=E step=S <name=value ...> total=V".
std::vector<EpochSummary> fit(model::Model& model, const std::vector<data::Episode>& episodes,
                              const TrainConfig& cfg, std::ostream* log = nullptr);

/// Batch-mean loss breakdown in eval mode, no update.
losses::LossResult evaluate_loss(const model::Model& model, ad::Tape& tape,
                                 const std::vector<const data::Frame*>& frames, const losses::LossWeights& weights);

}  // namespace pcsg::train
