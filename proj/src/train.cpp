#include "pcsg/train.hpp"

#include <cmath>
#include <map>

#include "pcsg/core.hpp"

namespace pcsg::train {

losses::LossResult train_step(model::Model& model, const std::vector<const data::Frame*>& frames,
                              const losses::LossWeights& weights, ad::AdamState& adam,
                              const ad::AdamConfig& adam_cfg, std::mt19937_64& rng) {
  ad::Tape tape;
  const auto p = model.params().bind(tape);
  const auto in = model::make_inputs(tape, frames);
  const auto out = model.forward(p, in, model::Mode::kTrain, &rng);
  auto result = losses::total_loss(out, losses::make_targets(frames), weights);
  tape.backward(result.total);

  std::vector<ad::Tensor> grads;
  grads.reserve(p.size());
  for (const auto& v : p) grads.push_back(tape.grad(v));
  adam_step(model.params(), grads, adam, adam_cfg);
  // The tape dies here; keep only plain numbers.
  result.total = {};
  return result;
}

double scheduled_lr(const TrainConfig& cfg, std::size_t step, std::size_t total_steps) {
  if (cfg.lr_floor == 1.0 || total_steps == 0) return cfg.adam.lr;
  const double progress = static_cast<double>(step) / static_cast<double>(total_steps);
  const double cosine = 0.5 * (1.0 + std::cos(kPi * progress));
  return cfg.adam.lr * (cfg.lr_floor + (1.0 - cfg.lr_floor) * cosine);
}

std::vector<EpochSummary> fit(model::Model& model, const std::vector<data::Episode>& episodes,
                              const TrainConfig& cfg, std::ostream* log) {
  ad::AdamState adam;
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<EpochSummary> summaries;
  std::size_t global_step = 0;
  const std::size_t total_steps = cfg.epochs * data::make_batches(episodes, cfg.batch_size, 0).size();

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto batches = data::make_batches(episodes, cfg.batch_size, cfg.seed * 1000003ULL + epoch);
    EpochSummary summary;
    summary.epoch = epoch;
    std::map<std::string, double> sums;
    std::vector<std::string> order;
    for (const auto& batch : batches) {
      ad::AdamConfig step_cfg = cfg.adam;
      step_cfg.lr = scheduled_lr(cfg, global_step, total_steps);
      const auto r = train_step(model, batch.frames, cfg.weights, adam, step_cfg, rng);
      if (log) *log << "epoch=" << epoch << " step=" << global_step << ' ' << r.log_line() << '\n';
      double total = 0.0;
      for (const auto& t : r.terms) {
        if (!sums.count(t.name)) order.push_back(t.name);
        sums[t.name] += t.raw;
        total += t.weighted;
      }
      summary.mean_total += total;
      ++summary.steps;
      ++global_step;
    }
    if (summary.steps > 0) {
      const double n = static_cast<double>(summary.steps);
      summary.mean_total /= n;
      for (const auto& name : order) summary.mean_terms.push_back({name, sums[name] / n, 0.0});
    }
    summaries.push_back(std::move(summary));
  }
  return summaries;
}

losses::LossResult evaluate_loss(const model::Model& model, ad::Tape& tape,
                                 const std::vector<const data::Frame*>& frames, const losses::LossWeights& weights) {
  const auto p = model.params().bind_frozen(tape);
  const auto in = model::make_inputs(tape, frames);
  const auto out = model.forward(p, in, model::Mode::kEval);
  return losses::total_loss(out, losses::make_targets(frames), weights);
}

}  // namespace pcsg::train
