#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "pcsg/dataset.hpp"
#include "pcsg/losses.hpp"
#include "pcsg/model.hpp"

namespace pcsg::attacks {

// ---- FGSM -------------------------------------------------------------------

struct FgsmResult {
  sensors::FrontView camera;  // perturbed image
  ad::Tensor gradient;        // d(total loss)/d(camera), same shape as the image
};

/// One signed-gradient step of size eps on the camera image, clamped to [0, 1],
/// against the frame's own ground truth. Rounding is corrected so that
/// |x' - x| never exceeds eps in floating point.
FgsmResult fgsm(const model::Model& model, const data::Frame& frame, double eps,
                const losses::LossWeights& weights = {});

/// x + eps * s rounded so the realised step is as close to eps as possible
/// without exceeding it, then clamped to [0, 1].
double fgsm_pixel(double x, double eps, double direction);

// ---- dot patches ------------------------------------------------------------

struct Dot {
  double row = 0.5;  // center as a fraction of image height
  double col = 0.5;  // and width
  double radius = 6.0;  // pixels
  std::array<double, 3> color{0.5, 0.5, 0.5};
  double peak_alpha = 0.5;

  friend bool operator==(const Dot&, const Dot&) = default;
};

struct DotPattern {
  std::vector<Dot> dots;
  friend bool operator==(const DotPattern&, const DotPattern&) = default;
};

/// Nine dots on a 3 x 3 grid with seeded colors and alpha 0.5.
DotPattern default_pattern(std::uint64_t seed = 0, double radius = 6.0);

/// Radial opacity of one dot at pixel (r, c), pixel centers at (r + 0.5, c + 0.5).
double dot_profile(const Dot& d, std::size_t r, std::size_t c, std::size_t h, std::size_t w);

/// Blends each dot in order over a 3 x H x W image.
sensors::FrontView apply_dots(const sensors::FrontView& image, const DotPattern& pattern);

/// Differentiable version over a B x (3*H*W) camera batch: colors is K x 3,
/// alphas is K (both already in [0, 1]).
ad::Var apply_dots(ad::Var cameras, ad::Var colors, ad::Var alphas, const DotPattern& geometry, std::size_t h,
                   std::size_t w);

struct DotTrainConfig {
  std::size_t steps = 30;
  double lr = 0.1;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  losses::LossWeights weights;
};

struct DotTrainResult {
  DotPattern pattern;
  double initial_loss = 0.0;
  double best_loss = 0.0;
  std::size_t steps_run = 0;
  bool diverged = false;
};

/// Gradient ascent of the mean total loss on dot colors and peak alphas
/// (sigmoid-parameterized); geometry stays fixed. Returns the best pattern seen.
DotTrainResult dot_attack_train(const model::Model& model, const std::vector<const data::Frame*>& frames,
                                const DotPattern& init, const DotTrainConfig& cfg);

/// Mean total loss of the frames with the pattern applied (eval mode).
double attack_loss(const model::Model& model, const std::vector<const data::Frame*>& frames,
                   const DotPattern& pattern, const losses::LossWeights& weights);

void save_pattern(const std::filesystem::path& path, const DotPattern& pattern);
DotPattern load_pattern(const std::filesystem::path& path);

}  // namespace pcsg::attacks
