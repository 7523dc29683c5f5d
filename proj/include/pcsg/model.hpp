#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "pcsg/autodiff.hpp"
#include "pcsg/dataset.hpp"
#include "pcsg/optim.hpp"

namespace pcsg::model {

using ad::Shape;
using ad::Tape;
using ad::Tensor;
using ad::Var;

// Paper sizes for reference: camera 300x400x3 per camera, LiDAR 256x256x2,
// front segmentation 160x768, top-down segmentation 256x256.
struct ModelConfig {
  std::size_t cam_c = 3, cam_h = 32, cam_w = 96;
  std::size_t lidar_c = 2, lidar_h = 64, lidar_w = 64;
  std::size_t front_seg_h = 32, front_seg_w = 96;
  std::size_t td_seg_h = 64, td_seg_w = 64;
  std::size_t img_embed_dim = 512;
  std::size_t lidar_embed_dim = 512;
  std::size_t shared_dim = 128;
  std::size_t meas_dim = 4;
  std::size_t hidden_dim = 64;  // fused vector and GRU state
  std::size_t waypoint_count = 4;
  std::size_t encoder_hidden = 64;
  std::size_t gauss_hidden = 128;
  std::size_t seg_hidden = 32;
  std::size_t aux_hidden = 64;
  std::size_t fusion_hidden = 128;
  bool use_shared = true;  // false: the shared embedding enters fusion as zeros

  std::size_t fused_dim() const { return img_embed_dim + lidar_embed_dim + shared_dim + meas_dim; }
  std::size_t cam_size() const { return cam_c * cam_h * cam_w; }
  std::size_t lidar_size() const { return lidar_c * lidar_h * lidar_w; }
};

enum class Mode { kTrain, kEval };

/// Network inputs for a batch of B frames, already on a tape.
struct Inputs {
  Var camera;  // B x (3*H*W)
  Var lidar;   // B x (2*H*W)
  Var meas;    // B x 4
  Var goal;    // B x 2
  std::size_t batch() const { return camera.shape()[0]; }
};

/// Stacks frames into constants; the camera becomes a gradient leaf when requested.
Inputs make_inputs(Tape& tape, const std::vector<const data::Frame*>& frames, bool camera_leaf = false);
Tensor stack_cameras(const std::vector<const data::Frame*>& frames);

struct ModelOutputs {
  Var waypoints;         // B x T x 2
  Var front_seg_logits;  // B x 4 x H x W
  Var td_seg_logits;     // B x 4 x H x W
  Var light_logits;      // B x 4
  Var stop_logit;        // B x 1
  Var mu_img, logvar_img;      // B x shared_dim
  Var mu_lidar, logvar_lidar;  // B x shared_dim
  Var shared_sample;           // B x shared_dim
};

class Model {
 public:
  explicit Model(ModelConfig cfg = {}, std::uint64_t init_seed = 0);

  const ModelConfig& config() const { return cfg_; }
  ad::ParameterStore& params() { return params_; }
  const ad::ParameterStore& params() const { return params_; }

  /// Bound parameter handles come from params().bind(...) or bind_frozen(...).
  /// Train mode draws the shared sample from rng; eval mode uses the mean.
  ModelOutputs forward(const std::vector<Var>& p, const Inputs& in, Mode mode, std::mt19937_64* rng = nullptr) const;

  /// Autoregressive GRU from the 64-d fused vector; returns B x T x 2.
  Var decode_waypoints(const std::vector<Var>& p, Var fused, Var goal) const;

  /// Parameter indices of the final waypoint-displacement layer.
  std::vector<std::size_t> waypoint_head() const { return {ix_.wp_w, ix_.wp_b}; }

 private:
  struct Index {
    std::size_t cam_w1, cam_b1, cam_w2, cam_b2;
    std::size_t lid_w1, lid_b1, lid_w2, lid_b2;
    std::size_t gi_w, gi_b, gi_mu_w, gi_mu_b, gi_lv_w, gi_lv_b;
    std::size_t gl_w, gl_b, gl_mu_w, gl_mu_b, gl_lv_w, gl_lv_b;
    std::size_t fs_w1, fs_b1, fs_w2, fs_b2;
    std::size_t ts_w1, ts_b1, ts_w2, ts_b2;
    std::size_t li_w1, li_b1, li_w2, li_b2;
    std::size_t st_w1, st_b1, st_w2, st_b2;
    std::size_t fu_w1, fu_b1, fu_w2, fu_b2;
    std::size_t gru_wz, gru_uz, gru_bz, gru_wr, gru_ur, gru_br, gru_wn, gru_un, gru_bn;
    std::size_t wp_w, wp_b;
  };

  ModelConfig cfg_;
  ad::ParameterStore params_;
  Index ix_{};
};

/// Scalar count implied by a configuration, computed from layer sizes alone.
std::size_t expected_parameter_count(const ModelConfig& cfg);

}  // namespace pcsg::model
