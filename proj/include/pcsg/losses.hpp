#pragma once

#include <array>
#include <limits>
#include <string>
#include <vector>

#include "pcsg/autodiff.hpp"
#include "pcsg/dataset.hpp"
#include "pcsg/model.hpp"

namespace pcsg::losses {

using ad::Tensor;
using ad::Var;

/// Rule facts of one frame plus penalty constants.
struct PenaltyContext {
  bool is_red = false;
  double y_stop = std::numeric_limits<double>::infinity();
  bool is_stop_sign = false;
  double delta_heading = 0.0;
  double dt = 0.5;
  double eps_v = 0.5;
  double v_lb = 2.0;
  std::vector<double> c{0.25, 0.25, 0.25, 0.25};  // waypoint weights, sum to 1
};

struct LossWeights {
  double eta_front = 1.0;
  double eta_td = 1.0;
  double eta_light = 1.0;
  double eta_stop = 1.0;
  double eta_align = 1.0;
  double lambda_red = 0.5;
  double lambda_stop = 0.5;
  double lambda_speed = 0.05;
  double eps_a = 5.0;
  double eps_v = 0.5;
  double v_lb = 2.0;
  double dt = 0.5;
};

class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& term) : std::runtime_error("non-finite loss term: " + term), term_(term) {}
  const std::string& term() const { return term_; }

 private:
  std::string term_;
};

// ---- single-frame terms on a T x 2 waypoint tensor ------------------------

Var policy_loss(Var pred, Var truth);
Var red_light_penalty(Var waypoints, const PenaltyContext& ctx);
Var estimated_speed(Var waypoints, double dt);
Var stop_sign_penalty(Var waypoints, const PenaltyContext& ctx);
Var curvature_speed_penalty(Var waypoints, const PenaltyContext& ctx);

// Plain-double versions of the same formulas.
double red_light_penalty(const std::vector<Waypoint>& w, const PenaltyContext& ctx);
double estimated_speed(const std::vector<Waypoint>& w, double dt);
double stop_sign_penalty(const std::vector<Waypoint>& w, const PenaltyContext& ctx);
double curvature_speed_penalty(const std::vector<Waypoint>& w, const PenaltyContext& ctx);

// ---- Gaussian alignment ----------------------------------------------------

/// Symmetric KL between diagonal Gaussians given as (mean, log-variance) vectors.
Var sym_kl(Var mu1, Var logvar1, Var mu2, Var logvar2);
/// Same with explicit variances; throws std::invalid_argument on variance <= 0.
double sym_kl(const std::vector<double>& mu1, const std::vector<double>& var1, const std::vector<double>& mu2,
              const std::vector<double>& var2);

/// N x N matrix D_ij = sym_kl(p1_i, p2_j) for batches of N Gaussians (rows).
Var pairwise_sym_kl(Var mu1, Var logvar1, Var mu2, Var logvar2);

/// mean(E * D + (1 - E) * max(0, eps_a - D)) with E the identity; N >= 2.
Var contrastive_align(Var mu1, Var logvar1, Var mu2, Var logvar2, double eps_a);

// ---- batch objective -------------------------------------------------------

struct Targets {
  Tensor waypoints;  // B x T x 2
  Tensor front_seg;  // B x 4 x H x W one-hot
  Tensor td_seg;     // B x 4 x H x W one-hot
  Tensor light;      // B x 4 one-hot
  Tensor stop;       // B x 1
  Tensor is_red;     // B x 1
  Tensor y_stop;     // B x 1, 0 where is_red is 0
  Tensor is_stop;    // B x 1
  Tensor curve;      // B x 1, sin(min(|delta_heading|, pi/2))
};

Targets make_targets(const std::vector<const data::Frame*>& frames);

struct Term {
  std::string name;
  double raw = 0.0;       // unweighted batch mean
  double weighted = 0.0;  // contribution to the total
};

struct LossResult {
  Var total;
  double value = 0.0;  // total.item(), kept after the tape is gone
  std::vector<Term> terms;

  /// name=value pairs of weighted contributions, then total.
  std::string log_line() const;
  double term(const std::string& name) const;
};

/// Policy loss + weighted auxiliary terms + Lagrangian penalties, all batch
/// means. With one frame the alignment term is the frame's own sym_kl.
/// Throws NumericError naming the first non-finite term.
LossResult total_loss(const model::ModelOutputs& out, const Targets& truth, const LossWeights& w);

/// Batched penalties on B x T x 2 waypoints; each returns B x 1.
Var batch_red_penalty(Var waypoints, const Targets& truth, const std::vector<double>& c);
Var batch_speed(Var waypoints, double dt);

}  // namespace pcsg::losses
