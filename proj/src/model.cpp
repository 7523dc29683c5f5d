#include "pcsg/model.hpp"

#include <cmath>
#include <stdexcept>

namespace pcsg::model {

namespace {

constexpr double kLogVarMin = -8.0;
constexpr double kLogVarMax = 4.0;
// Input scaling of goal/previous waypoint (meters) and speed (m/s).
constexpr double kPosScale = 0.1;
constexpr double kSpeedScale = 0.1;

Var linear(Var x, Var w, Var b) { return ad::add_bias(ad::matmul(x, w), b); }

}  // namespace

std::size_t expected_parameter_count(const ModelConfig& c) {
  auto lin = [](std::size_t in, std::size_t out) { return in * out + out; };
  const std::size_t S = c.shared_dim, H = c.hidden_dim;
  std::size_t n = 0;
  n += lin(c.cam_size(), c.encoder_hidden) + lin(c.encoder_hidden, c.img_embed_dim);
  n += lin(c.lidar_size(), c.encoder_hidden) + lin(c.encoder_hidden, c.lidar_embed_dim);
  n += lin(c.img_embed_dim, c.gauss_hidden) + 2 * lin(c.gauss_hidden, S);
  n += lin(c.lidar_embed_dim, c.gauss_hidden) + 2 * lin(c.gauss_hidden, S);
  n += lin(c.lidar_embed_dim, c.seg_hidden) + lin(c.seg_hidden, 4 * c.front_seg_h * c.front_seg_w);
  n += lin(c.img_embed_dim, c.seg_hidden) + lin(c.seg_hidden, 4 * c.td_seg_h * c.td_seg_w);
  n += lin(c.img_embed_dim, c.aux_hidden) + lin(c.aux_hidden, 4);
  n += lin(c.img_embed_dim, c.aux_hidden) + lin(c.aux_hidden, 1);
  n += lin(c.fused_dim(), c.fusion_hidden) + lin(c.fusion_hidden, H);
  n += 3 * (4 * H + H * H + H);
  n += lin(H, 2);
  return n;
}

Model::Model(ModelConfig cfg, std::uint64_t init_seed) : cfg_(cfg) {
  std::mt19937_64 rng(init_seed);
  auto weight = [&](const std::string& name, std::size_t in, std::size_t out) {
    const double a = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> u(-a, a);
    Tensor t(Shape{in, out});
    for (double& v : t.data()) v = u(rng);
    return params_.add(name, std::move(t));
  };
  auto bias = [&](const std::string& name, std::size_t n) { return params_.add(name, Tensor(Shape{n}, 0.0)); };
  const auto& c = cfg_;
  const std::size_t S = c.shared_dim, H = c.hidden_dim;

  ix_.cam_w1 = weight("cam.w1", c.cam_size(), c.encoder_hidden);
  ix_.cam_b1 = bias("cam.b1", c.encoder_hidden);
  ix_.cam_w2 = weight("cam.w2", c.encoder_hidden, c.img_embed_dim);
  ix_.cam_b2 = bias("cam.b2", c.img_embed_dim);
  ix_.lid_w1 = weight("lidar.w1", c.lidar_size(), c.encoder_hidden);
  ix_.lid_b1 = bias("lidar.b1", c.encoder_hidden);
  ix_.lid_w2 = weight("lidar.w2", c.encoder_hidden, c.lidar_embed_dim);
  ix_.lid_b2 = bias("lidar.b2", c.lidar_embed_dim);

  ix_.gi_w = weight("gauss_img.w", c.img_embed_dim, c.gauss_hidden);
  ix_.gi_b = bias("gauss_img.b", c.gauss_hidden);
  ix_.gi_mu_w = weight("gauss_img.mu.w", c.gauss_hidden, S);
  ix_.gi_mu_b = bias("gauss_img.mu.b", S);
  ix_.gi_lv_w = weight("gauss_img.logvar.w", c.gauss_hidden, S);
  ix_.gi_lv_b = bias("gauss_img.logvar.b", S);
  ix_.gl_w = weight("gauss_lidar.w", c.lidar_embed_dim, c.gauss_hidden);
  ix_.gl_b = bias("gauss_lidar.b", c.gauss_hidden);
  ix_.gl_mu_w = weight("gauss_lidar.mu.w", c.gauss_hidden, S);
  ix_.gl_mu_b = bias("gauss_lidar.mu.b", S);
  ix_.gl_lv_w = weight("gauss_lidar.logvar.w", c.gauss_hidden, S);
  ix_.gl_lv_b = bias("gauss_lidar.logvar.b", S);

  ix_.fs_w1 = weight("front_seg.w1", c.lidar_embed_dim, c.seg_hidden);
  ix_.fs_b1 = bias("front_seg.b1", c.seg_hidden);
  ix_.fs_w2 = weight("front_seg.w2", c.seg_hidden, 4 * c.front_seg_h * c.front_seg_w);
  ix_.fs_b2 = bias("front_seg.b2", 4 * c.front_seg_h * c.front_seg_w);
  ix_.ts_w1 = weight("td_seg.w1", c.img_embed_dim, c.seg_hidden);
  ix_.ts_b1 = bias("td_seg.b1", c.seg_hidden);
  ix_.ts_w2 = weight("td_seg.w2", c.seg_hidden, 4 * c.td_seg_h * c.td_seg_w);
  ix_.ts_b2 = bias("td_seg.b2", 4 * c.td_seg_h * c.td_seg_w);

  ix_.li_w1 = weight("light.w1", c.img_embed_dim, c.aux_hidden);
  ix_.li_b1 = bias("light.b1", c.aux_hidden);
  ix_.li_w2 = weight("light.w2", c.aux_hidden, 4);
  ix_.li_b2 = bias("light.b2", 4);
  ix_.st_w1 = weight("stop.w1", c.img_embed_dim, c.aux_hidden);
  ix_.st_b1 = bias("stop.b1", c.aux_hidden);
  ix_.st_w2 = weight("stop.w2", c.aux_hidden, 1);
  ix_.st_b2 = bias("stop.b2", 1);

  ix_.fu_w1 = weight("fusion.w1", c.fused_dim(), c.fusion_hidden);
  ix_.fu_b1 = bias("fusion.b1", c.fusion_hidden);
  ix_.fu_w2 = weight("fusion.w2", c.fusion_hidden, H);
  ix_.fu_b2 = bias("fusion.b2", H);

  ix_.gru_wz = weight("gru.wz", 4, H);
  ix_.gru_uz = weight("gru.uz", H, H);
  ix_.gru_bz = bias("gru.bz", H);
  ix_.gru_wr = weight("gru.wr", 4, H);
  ix_.gru_ur = weight("gru.ur", H, H);
  ix_.gru_br = bias("gru.br", H);
  ix_.gru_wn = weight("gru.wn", 4, H);
  ix_.gru_un = weight("gru.un", H, H);
  ix_.gru_bn = bias("gru.bn", H);
  ix_.wp_w = weight("waypoint.w", H, 2);
  ix_.wp_b = bias("waypoint.b", 2);
}

Var Model::decode_waypoints(const std::vector<Var>& p, Var fused, Var goal) const {
  Tape& t = fused.tape();
  const std::size_t B = fused.shape()[0];
  Var h = fused;
  Var prev = t.constant(Tensor(Shape{B, 2}, 0.0));
  const Var goal_in = ad::scale(goal, kPosScale);
  std::vector<Var> steps;
  for (std::size_t k = 0; k < cfg_.waypoint_count; ++k) {
    const Var x = ad::concat({ad::scale(prev, kPosScale), goal_in}, 1);
    const Var z = ad::sigmoid(ad::add_bias(ad::matmul(x, p[ix_.gru_wz]) + ad::matmul(h, p[ix_.gru_uz]), p[ix_.gru_bz]));
    const Var r = ad::sigmoid(ad::add_bias(ad::matmul(x, p[ix_.gru_wr]) + ad::matmul(h, p[ix_.gru_ur]), p[ix_.gru_br]));
    const Var n =
        ad::tanh(ad::add_bias(ad::matmul(x, p[ix_.gru_wn]) + ad::matmul(r * h, p[ix_.gru_un]), p[ix_.gru_bn]));
    // h' = (1 - z) * n + z * h
    h = n + z * (h - n);
    prev = prev + linear(h, p[ix_.wp_w], p[ix_.wp_b]);
    steps.push_back(prev);
  }
  return ad::reshape(ad::concat(steps, 1), Shape{B, cfg_.waypoint_count, 2});
}

ModelOutputs Model::forward(const std::vector<Var>& p, const Inputs& in, Mode mode, std::mt19937_64* rng) const {
  const auto& c = cfg_;
  const std::size_t B = in.batch();
  if (in.camera.shape() != Shape{B, c.cam_size()} || in.lidar.shape() != Shape{B, c.lidar_size()} ||
      in.meas.shape() != Shape{B, c.meas_dim} || in.goal.shape() != Shape{B, 2}) {
    throw ad::ShapeError("model inputs do not match the configuration: camera " + ad::to_string(in.camera.shape()) +
                         ", lidar " + ad::to_string(in.lidar.shape()));
  }
  Tape& t = in.camera.tape();
  ModelOutputs o;

  const Var img = ad::relu(linear(ad::relu(linear(in.camera, p[ix_.cam_w1], p[ix_.cam_b1])), p[ix_.cam_w2], p[ix_.cam_b2]));
  const Var lid = ad::relu(linear(ad::relu(linear(in.lidar, p[ix_.lid_w1], p[ix_.lid_b1])), p[ix_.lid_w2], p[ix_.lid_b2]));

  const Var gi = ad::relu(linear(img, p[ix_.gi_w], p[ix_.gi_b]));
  o.mu_img = linear(gi, p[ix_.gi_mu_w], p[ix_.gi_mu_b]);
  o.logvar_img = ad::clamp(linear(gi, p[ix_.gi_lv_w], p[ix_.gi_lv_b]), kLogVarMin, kLogVarMax);
  const Var gl = ad::relu(linear(lid, p[ix_.gl_w], p[ix_.gl_b]));
  o.mu_lidar = linear(gl, p[ix_.gl_mu_w], p[ix_.gl_mu_b]);
  o.logvar_lidar = ad::clamp(linear(gl, p[ix_.gl_lv_w], p[ix_.gl_lv_b]), kLogVarMin, kLogVarMax);

  if (mode == Mode::kTrain) {
    if (!rng) throw std::invalid_argument("train-mode forward needs an rng");
    std::normal_distribution<double> normal(0.0, 1.0);
    Tensor z(Shape{B, c.shared_dim});
    for (double& v : z.data()) v = normal(*rng);
    o.shared_sample = o.mu_img + ad::exp(ad::scale(o.logvar_img, 0.5)) * t.constant(std::move(z));
  } else {
    o.shared_sample = o.mu_img;
  }

  // Crossed flows: each modality's segmentation is decoded from the other one.
  o.front_seg_logits = ad::reshape(
      linear(ad::relu(linear(lid, p[ix_.fs_w1], p[ix_.fs_b1])), p[ix_.fs_w2], p[ix_.fs_b2]),
      Shape{B, 4, c.front_seg_h, c.front_seg_w});
  o.td_seg_logits = ad::reshape(linear(ad::relu(linear(img, p[ix_.ts_w1], p[ix_.ts_b1])), p[ix_.ts_w2], p[ix_.ts_b2]),
                                Shape{B, 4, c.td_seg_h, c.td_seg_w});
  o.light_logits = linear(ad::relu(linear(img, p[ix_.li_w1], p[ix_.li_b1])), p[ix_.li_w2], p[ix_.li_b2]);
  o.stop_logit = linear(ad::relu(linear(img, p[ix_.st_w1], p[ix_.st_b1])), p[ix_.st_w2], p[ix_.st_b2]);

  const Var shared = c.use_shared ? o.shared_sample : t.constant(Tensor(Shape{B, c.shared_dim}, 0.0));
  Tensor meas_scale(Shape{B, c.meas_dim}, 1.0);
  for (std::size_t b = 0; b < B; ++b) meas_scale[b * c.meas_dim] = kSpeedScale;
  const Var meas = in.meas * t.constant(std::move(meas_scale));
  const Var fused = ad::concat({img, lid, shared, meas}, 1);
  const Var f64 = ad::tanh(linear(ad::relu(linear(fused, p[ix_.fu_w1], p[ix_.fu_b1])), p[ix_.fu_w2], p[ix_.fu_b2]));
  o.waypoints = decode_waypoints(p, f64, in.goal);
  return o;
}

Tensor stack_cameras(const std::vector<const data::Frame*>& frames) {
  const std::size_t n = frames.empty() ? 0 : frames[0]->camera.grid.size();
  Tensor cam(Shape{frames.size(), n});
  for (std::size_t b = 0; b < frames.size(); ++b) {
    const auto src = frames[b]->camera.grid.data();
    std::copy(src.begin(), src.end(), cam.data().begin() + static_cast<std::ptrdiff_t>(b * n));
  }
  return cam;
}

Inputs make_inputs(Tape& tape, const std::vector<const data::Frame*>& frames, bool camera_leaf) {
  if (frames.empty()) throw std::invalid_argument("make_inputs: empty batch");
  const std::size_t B = frames.size();
  const std::size_t nl = frames[0]->lidar.grid.size();
  Tensor lidar(Shape{B, nl}), meas(Shape{B, 4}), goal(Shape{B, 2});
  for (std::size_t b = 0; b < B; ++b) {
    const auto src = frames[b]->lidar.grid.data();
    std::copy(src.begin(), src.end(), lidar.data().begin() + static_cast<std::ptrdiff_t>(b * nl));
    for (std::size_t k = 0; k < 4; ++k) meas[b * 4 + k] = frames[b]->meas.values[k];
    goal[b * 2] = frames[b]->goal.x;
    goal[b * 2 + 1] = frames[b]->goal.y;
  }
  Tensor cam = stack_cameras(frames);
  Inputs in;
  in.camera = camera_leaf ? tape.leaf(std::move(cam)) : tape.constant(std::move(cam));
  in.lidar = tape.constant(std::move(lidar));
  in.meas = tape.constant(std::move(meas));
  in.goal = tape.constant(std::move(goal));
  return in;
}

}  // namespace pcsg::model
