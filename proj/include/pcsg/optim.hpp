#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "pcsg/autodiff.hpp"

namespace pcsg::ad {

/// Named, ordered set of learnable tensors.
class ParameterStore {
 public:
  /// Adds a tensor; names must be unique. Returns its index.
  std::size_t add(std::string name, Tensor init);

  std::size_t size() const { return tensors_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  const Tensor& operator[](std::size_t i) const { return tensors_[i]; }
  Tensor& operator[](std::size_t i) { return tensors_[i]; }
  std::size_t index_of(const std::string& name) const;
  std::size_t scalar_count() const;

  /// Records every tensor as a gradient leaf on the tape.
  std::vector<Var> bind(Tape& tape) const;
  /// Records every tensor as a constant (frozen weights).
  std::vector<Var> bind_frozen(Tape& tape) const;

  friend bool operator==(const ParameterStore&, const ParameterStore&) = default;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
};

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& params);
/// Loads into a store built with the same architecture; names and shapes must match.
void load_checkpoint(const std::filesystem::path& path, ParameterStore& params);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::int64_t step = 0;
};

/// One Adam update of every parameter in place.
void adam_step(ParameterStore& params, const std::vector<Tensor>& grads, AdamState& state,
               const AdamConfig& cfg);

using ScalarFn = std::function<Var(Tape&, Var x)>;

/// Max over coordinates of |analytic - numeric| / max(1, |numeric|), using
/// central differences of step h.
double grad_check(const ScalarFn& f, const Tensor& x, double h = 1e-5);

struct SampledCheck {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;
};

/// grad_check restricted to `count` coordinates drawn uniformly with `rng`.
/// A coordinate whose one-sided differences disagree by more than
/// kink_tol (relative) straddles a kink and is redrawn.
SampledCheck grad_check_sampled(const ScalarFn& f, const Tensor& x, std::size_t count,
                                std::mt19937_64& rng, double h = 1e-5, double kink_tol = 1e-3);

}  // namespace pcsg::ad
