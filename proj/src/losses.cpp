#include "pcsg/losses.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "pcsg/core.hpp"
#include "pcsg/kvfile.hpp"

namespace pcsg::losses {

using ad::Shape;
using ad::Tape;

namespace {

double relu(double x) { return std::max(x, 0.0); }

double curve_factor(double delta_heading) { return std::sin(std::min(std::abs(delta_heading), kPi / 2)); }

void check_waypoints(Var w) {
  if (w.shape().size() != 2 || w.shape()[1] != 2 || w.shape()[0] < 2) {
    throw ad::ShapeError("expected T x 2 waypoints with T >= 2, got " + ad::to_string(w.shape()));
  }
}

Var zero_like_graph(Var w) { return ad::scale(ad::sum(w), 0.0); }

Var cross_entropy(Var logits, const Tensor& onehot, std::size_t count) {
  const Var lp = ad::log_softmax(logits, 1);
  return ad::scale(ad::sum(lp * logits.tape().constant(onehot)), -1.0 / static_cast<double>(count));
}

}  // namespace

// ---- single-frame terms ----------------------------------------------------

Var policy_loss(Var pred, Var truth) { return ad::l1_diff(pred, truth); }

Var red_light_penalty(Var w, const PenaltyContext& ctx) {
  check_waypoints(w);
  const std::size_t T = w.shape()[0];
  if (ctx.c.size() != T) throw std::invalid_argument("red_light_penalty: need one weight per waypoint");
  if (!ctx.is_red) return zero_like_graph(w);
  const Var y = ad::reshape(ad::slice(w, 1, 1, 2), Shape{T});
  const Var over = ad::max_with_scalar(ad::add_scalar(y, -ctx.y_stop), 0.0);
  return ad::sum(over * w.tape().constant(Tensor(Shape{T}, ctx.c)));
}

Var estimated_speed(Var w, double dt) {
  check_waypoints(w);
  const Var d = ad::slice(w, 0, 1, 2) - ad::slice(w, 0, 0, 1);
  return ad::scale(ad::sqrt(ad::sum(d * d)), 1.0 / dt);
}

Var stop_sign_penalty(Var w, const PenaltyContext& ctx) {
  if (!ctx.is_stop_sign) return zero_like_graph(w);
  return ad::max_with_scalar(ad::add_scalar(estimated_speed(w, ctx.dt), -ctx.eps_v), 0.0);
}

Var curvature_speed_penalty(Var w, const PenaltyContext& ctx) {
  const Var over = ad::max_with_scalar(ad::add_scalar(estimated_speed(w, ctx.dt), -ctx.v_lb), 0.0);
  return ad::scale(over, curve_factor(ctx.delta_heading));
}

double red_light_penalty(const std::vector<Waypoint>& w, const PenaltyContext& ctx) {
  if (!ctx.is_red) return 0.0;
  double p = 0.0;
  for (std::size_t t = 0; t < w.size(); ++t) p += relu(w[t].y - ctx.y_stop) * ctx.c[t];
  return p;
}

double estimated_speed(const std::vector<Waypoint>& w, double dt) {
  const double dx = w[1].x - w[0].x, dy = w[1].y - w[0].y;
  return std::sqrt(dx * dx + dy * dy) / dt;
}

double stop_sign_penalty(const std::vector<Waypoint>& w, const PenaltyContext& ctx) {
  if (!ctx.is_stop_sign) return 0.0;
  return relu(estimated_speed(w, ctx.dt) - ctx.eps_v);
}

double curvature_speed_penalty(const std::vector<Waypoint>& w, const PenaltyContext& ctx) {
  return relu(estimated_speed(w, ctx.dt) - ctx.v_lb) * curve_factor(ctx.delta_heading);
}

// ---- Gaussian alignment ----------------------------------------------------

Var sym_kl(Var mu1, Var lv1, Var mu2, Var lv2) {
  // Per dimension: sinh^2((lv1 - lv2) / 2) + (mu1 - mu2)^2 (1/v1 + 1/v2) / 4,
  // the log terms of the two KL directions cancel.
  const Var half = ad::scale(lv1 - lv2, 0.5);
  const Var sh = ad::scale(ad::exp(half) - ad::exp(ad::scale(half, -1.0)), 0.5);
  const Var d = mu1 - mu2;
  const Var inv = ad::exp(ad::scale(lv1, -1.0)) + ad::exp(ad::scale(lv2, -1.0));
  return ad::sum(sh * sh + ad::scale(d * d * inv, 0.25));
}

double sym_kl(const std::vector<double>& mu1, const std::vector<double>& var1, const std::vector<double>& mu2,
              const std::vector<double>& var2) {
  if (mu1.size() != var1.size() || mu1.size() != mu2.size() || mu1.size() != var2.size()) {
    throw std::invalid_argument("sym_kl: dimension mismatch");
  }
  auto kl = [](double m1, double v1, double m2, double v2) {
    return 0.5 * std::log(v2 / v1) + (v1 + (m1 - m2) * (m1 - m2)) / (2.0 * v2) - 0.5;
  };
  double s = 0.0;
  for (std::size_t d = 0; d < mu1.size(); ++d) {
    if (!(var1[d] > 0) || !(var2[d] > 0)) throw std::invalid_argument("sym_kl: variances must be positive");
    s += 0.5 * kl(mu1[d], var1[d], mu2[d], var2[d]) + 0.5 * kl(mu2[d], var2[d], mu1[d], var1[d]);
  }
  return s;
}

Var pairwise_sym_kl(Var mu1, Var lv1, Var mu2, Var lv2) {
  const std::size_t N = mu1.shape()[0];
  if (mu1.shape().size() != 2 || mu1.shape() != lv1.shape() || mu1.shape() != mu2.shape() ||
      mu1.shape() != lv2.shape()) {
    throw ad::ShapeError("pairwise_sym_kl: expected four N x D inputs, got " + ad::to_string(mu1.shape()) + " and " +
                         ad::to_string(mu2.shape()));
  }
  // Row i*N + j of the expanded tensors pairs p1_i with p2_j.
  Tensor rows(Shape{N * N, N}, 0.0), cols(Shape{N * N, N}, 0.0);
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t j = 0; j < N; ++j) {
      rows[(i * N + j) * N + i] = 1.0;
      cols[(i * N + j) * N + j] = 1.0;
    }
  }
  Tape& t = mu1.tape();
  const Var R = t.constant(std::move(rows)), C = t.constant(std::move(cols));
  const Var a_mu = ad::matmul(R, mu1), a_lv = ad::matmul(R, lv1);
  const Var b_mu = ad::matmul(C, mu2), b_lv = ad::matmul(C, lv2);
  const Var half = ad::scale(a_lv - b_lv, 0.5);
  const Var sh = ad::scale(ad::exp(half) - ad::exp(ad::scale(half, -1.0)), 0.5);
  const Var d = a_mu - b_mu;
  const Var inv = ad::exp(ad::scale(a_lv, -1.0)) + ad::exp(ad::scale(b_lv, -1.0));
  return ad::reshape(ad::sum_axis(sh * sh + ad::scale(d * d * inv, 0.25), 1), Shape{N, N});
}

Var contrastive_align(Var mu1, Var lv1, Var mu2, Var lv2, double eps_a) {
  const std::size_t N = mu1.shape().empty() ? 0 : mu1.shape()[0];
  if (N < 2) throw std::invalid_argument("contrastive_align needs at least two pairs");
  const Var D = pairwise_sym_kl(mu1, lv1, mu2, lv2);
  Tensor eye(Shape{N, N}, 0.0), off(Shape{N, N}, 1.0);
  for (std::size_t i = 0; i < N; ++i) {
    eye[i * N + i] = 1.0;
    off[i * N + i] = 0.0;
  }
  Tape& t = mu1.tape();
  const Var hinge = ad::max_with_scalar(ad::add_scalar(ad::scale(D, -1.0), eps_a), 0.0);
  return ad::mean(D * t.constant(std::move(eye)) + hinge * t.constant(std::move(off)));
}

// ---- batch objective -------------------------------------------------------

Targets make_targets(const std::vector<const data::Frame*>& frames) {
  const std::size_t B = frames.size();
  if (B == 0) throw std::invalid_argument("make_targets: empty batch");
  const auto& f0 = *frames[0];
  const std::size_t T = data::kWaypoints;
  Targets tg;
  tg.waypoints = Tensor(Shape{B, T, 2});
  tg.front_seg = Tensor(Shape{B, 4, f0.front_seg.h, f0.front_seg.w});
  tg.td_seg = Tensor(Shape{B, 4, f0.td_seg.h, f0.td_seg.w});
  tg.light = Tensor(Shape{B, 4});
  for (Tensor* t : {&tg.stop, &tg.is_red, &tg.y_stop, &tg.is_stop, &tg.curve}) *t = Tensor(Shape{B, 1});
  const std::size_t nf = 4 * f0.front_seg.h * f0.front_seg.w, nt = 4 * f0.td_seg.h * f0.td_seg.w;
  for (std::size_t b = 0; b < B; ++b) {
    const data::Frame& f = *frames[b];
    for (std::size_t k = 0; k < T; ++k) {
      tg.waypoints[(b * T + k) * 2] = f.waypoints[k].x;
      tg.waypoints[(b * T + k) * 2 + 1] = f.waypoints[k].y;
    }
    const Tensor fo = f.front_seg.one_hot(), to = f.td_seg.one_hot();
    if (fo.size() != nf || to.size() != nt) throw ad::ShapeError("make_targets: segmentation sizes differ in batch");
    std::copy(fo.data().begin(), fo.data().end(), tg.front_seg.data().begin() + static_cast<std::ptrdiff_t>(b * nf));
    std::copy(to.data().begin(), to.data().end(), tg.td_seg.data().begin() + static_cast<std::ptrdiff_t>(b * nt));
    for (std::size_t k = 0; k < 4; ++k) tg.light[b * 4 + k] = f.light_state[k];
    tg.stop[b] = f.stop_sign_flag;
    tg.is_red[b] = f.is_red ? 1.0 : 0.0;
    tg.y_stop[b] = f.is_red ? f.y_stop : 0.0;
    tg.is_stop[b] = f.stop_sign_flag;
    tg.curve[b] = curve_factor(f.delta_heading);
  }
  return tg;
}

Var batch_speed(Var w, double dt) {
  const std::size_t B = w.shape()[0];
  const Var d = ad::reshape(ad::slice(w, 1, 1, 2) - ad::slice(w, 1, 0, 1), Shape{B, 2});
  return ad::scale(ad::sqrt(ad::sum_axis(d * d, 1)), 1.0 / dt);
}

Var batch_red_penalty(Var w, const Targets& truth, const std::vector<double>& c) {
  const std::size_t B = w.shape()[0], T = w.shape()[1];
  if (c.size() != T) throw std::invalid_argument("batch_red_penalty: need one weight per waypoint");
  Tensor stop(Shape{B, T}), weight(Shape{B, T});
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t k = 0; k < T; ++k) {
      stop[b * T + k] = truth.y_stop[b];
      weight[b * T + k] = c[k] * truth.is_red[b];
    }
  }
  Tape& t = w.tape();
  const Var y = ad::reshape(ad::slice(w, 2, 1, 2), Shape{B, T});
  const Var over = ad::max_with_scalar(y - t.constant(std::move(stop)), 0.0);
  return ad::sum_axis(over * t.constant(std::move(weight)), 1);
}

LossResult total_loss(const model::ModelOutputs& out, const Targets& truth, const LossWeights& w) {
  Tape& t = out.waypoints.tape();
  const std::size_t B = out.waypoints.shape()[0];
  const std::size_t T = out.waypoints.shape()[1];
  const double inv_b = 1.0 / static_cast<double>(B);
  auto column = [&](const Tensor& x) { return t.constant(Tensor(Shape{B}, std::vector<double>(x.data().begin(), x.data().end()))); };

  const Var policy = ad::scale(ad::l1_diff(out.waypoints, t.constant(truth.waypoints)), inv_b);
  const Shape& fs = out.front_seg_logits.shape();
  const Shape& ts = out.td_seg_logits.shape();
  const Var front = cross_entropy(out.front_seg_logits, truth.front_seg, B * fs[2] * fs[3]);
  const Var td = cross_entropy(out.td_seg_logits, truth.td_seg, B * ts[2] * ts[3]);
  const Var light = cross_entropy(out.light_logits, truth.light, B);
  const Var z = out.stop_logit;
  const Var bce = ad::relu(z) + ad::log(ad::add_scalar(ad::exp(ad::scale(ad::abs(z), -1.0)), 1.0)) -
                  z * t.constant(truth.stop);
  const Var stop = ad::mean(bce);
  const Var align = B >= 2 ? contrastive_align(out.mu_img, out.logvar_img, out.mu_lidar, out.logvar_lidar, w.eps_a)
                           : sym_kl(out.mu_img, out.logvar_img, out.mu_lidar, out.logvar_lidar);

  const std::vector<double> c(T, 1.0 / static_cast<double>(T));
  const Var p_red = ad::scale(ad::sum(batch_red_penalty(out.waypoints, truth, c)), inv_b);
  const Var v = batch_speed(out.waypoints, w.dt);
  const Var p_stop =
      ad::scale(ad::sum(ad::max_with_scalar(ad::add_scalar(v, -w.eps_v), 0.0) * column(truth.is_stop)), inv_b);
  const Var p_speed =
      ad::scale(ad::sum(ad::max_with_scalar(ad::add_scalar(v, -w.v_lb), 0.0) * column(truth.curve)), inv_b);

  const std::pair<const char*, std::pair<Var, double>> parts[] = {
      {"policy", {policy, 1.0}},         {"front_seg", {front, w.eta_front}}, {"td_seg", {td, w.eta_td}},
      {"light", {light, w.eta_light}},   {"stop", {stop, w.eta_stop}},        {"align", {align, w.eta_align}},
      {"p_red", {p_red, w.lambda_red}},  {"p_stop", {p_stop, w.lambda_stop}}, {"p_speed", {p_speed, w.lambda_speed}},
  };
  LossResult res;
  for (const auto& [name, vw] : parts) {
    const auto& [var, weight] = vw;
    const double raw = var.item();
    if (!std::isfinite(raw)) throw NumericError(name);
    const Var contrib = ad::scale(var, weight);
    res.terms.push_back({name, raw, contrib.item()});
    res.total = res.total.valid() ? res.total + contrib : contrib;
  }
  if (!std::isfinite(res.total.item())) throw NumericError("total");
  res.value = res.total.item();
  return res;
}

std::string LossResult::log_line() const {
  std::ostringstream os;
  for (const Term& term : terms) os << term.name << "=" << format_double(term.weighted) << " ";
  os << "total=" << format_double(value);
  return os.str();
}

double LossResult::term(const std::string& name) const {
  for (const Term& t : terms)
    if (t.name == name) return t.raw;
  throw std::out_of_range("no loss term named " + name);
}

}  // namespace pcsg::losses
