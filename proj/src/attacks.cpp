#include "pcsg/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "pcsg/binio.hpp"
#include "pcsg/optim.hpp"

namespace pcsg::attacks {

using ad::Shape;
using ad::Tape;
using ad::Tensor;
using ad::Var;

namespace {

constexpr binio::Magic kDotMagic{'P', 'D', 'O', 'T'};
constexpr std::uint16_t kDotVersion = 1;

double logit(double p) {
  p = std::clamp(p, 1e-6, 1.0 - 1e-6);
  return std::log(p / (1.0 - p));
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

double fgsm_pixel(double x, double eps, double direction) {
  if (eps == 0.0 || direction == 0.0) return x;
  const double toward = direction > 0 ? 2.0 : -1.0;
  double y = x + (direction > 0 ? eps : -eps);
  // Pull back inside the bound, then push out while it still fits.
  while (std::fabs(y - x) > eps) y = std::nextafter(y, x);
  for (double next = std::nextafter(y, toward); std::fabs(next - x) <= eps && next != y;
       next = std::nextafter(y, toward))
    y = next;
  return std::clamp(y, 0.0, 1.0);
}

FgsmResult fgsm(const model::Model& model, const data::Frame& frame, double eps, const losses::LossWeights& weights) {
  const std::vector<const data::Frame*> frames{&frame};
  Tape tape;
  const auto p = model.params().bind_frozen(tape);
  const auto in = model::make_inputs(tape, frames, /*camera_leaf=*/true);
  const auto out = model.forward(p, in, model::Mode::kEval);
  const auto loss = losses::total_loss(out, losses::make_targets(frames), weights);
  tape.backward(loss.total);

  FgsmResult res;
  res.gradient = Tensor(frame.camera.grid.shape());
  const Tensor g = tape.grad(in.camera);
  std::copy(g.data().begin(), g.data().end(), res.gradient.data().begin());
  res.camera = frame.camera;
  auto x = res.camera.grid.data();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double s = g[i] > 0 ? 1.0 : (g[i] < 0 ? -1.0 : 0.0);
    x[i] = fgsm_pixel(x[i], eps, s);
  }
  return res;
}

DotPattern default_pattern(std::uint64_t seed, double radius) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.2, 0.8);
  DotPattern p;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      Dot d;
      d.row = (2 * i + 1) / 6.0;
      d.col = (2 * j + 1) / 6.0;
      d.radius = radius;
      for (double& c : d.color) c = u(rng);
      d.peak_alpha = 0.5;
      p.dots.push_back(d);
    }
  return p;
}

double dot_profile(const Dot& d, std::size_t r, std::size_t c, std::size_t h, std::size_t w) {
  const double dr = static_cast<double>(r) + 0.5 - d.row * static_cast<double>(h);
  const double dc = static_cast<double>(c) + 0.5 - d.col * static_cast<double>(w);
  return std::max(0.0, 1.0 - std::hypot(dr, dc) / d.radius);
}

sensors::FrontView apply_dots(const sensors::FrontView& image, const DotPattern& pattern) {
  sensors::FrontView out = image;
  const std::size_t h = image.grid.dim(1), w = image.grid.dim(2);
  auto px = out.grid.data();
  for (const Dot& d : pattern.dots)
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c < w; ++c) {
        const double a = d.peak_alpha * dot_profile(d, r, c, h, w);
        if (a == 0.0) continue;
        for (std::size_t ch = 0; ch < 3; ++ch) {
          double& v = px[(ch * h + r) * w + c];
          v = std::clamp((1.0 - a) * v + a * d.color[ch], 0.0, 1.0);
        }
      }
  return out;
}

Var apply_dots(Var cameras, Var colors, Var alphas, const DotPattern& geometry, std::size_t h, std::size_t w) {
  Tape& t = cameras.tape();
  const std::size_t B = cameras.shape()[0];
  const std::size_t n = 3 * h * w;
  if (cameras.shape()[1] != n) throw ad::ShapeError("apply_dots: camera width " + ad::to_string(cameras.shape()));
  const Var ones = t.constant(Tensor(Shape{B, 1}, 1.0));

  Var out = cameras;
  for (std::size_t k = 0; k < geometry.dots.size(); ++k) {
    // Profile replicated over the three channels, and a channel selector so
    // that color (1 x 3) @ selector (3 x n) paints each channel plane.
    Tensor profile(Shape{1, n});
    Tensor selector(Shape{3, n});
    for (std::size_t ch = 0; ch < 3; ++ch)
      for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c) {
          const std::size_t i = (ch * h + r) * w + c;
          profile[i] = dot_profile(geometry.dots[k], r, c, h, w);
          selector[ch * n + i] = 1.0;
        }
    const Var alpha_row = ad::slice(alphas, 0, k, k + 1) * t.constant(std::move(profile));
    const Var color_row = ad::matmul(ad::reshape(ad::slice(colors, 0, k, k + 1), Shape{1, 3}), t.constant(std::move(selector)));
    const Var alpha_map = ad::matmul(ones, alpha_row);
    const Var color_map = ad::matmul(ones, color_row);
    out = out + alpha_map * (color_map - out);
  }
  return out;
}

namespace {

struct DotLoss {
  double value = 0.0;
  std::vector<double> grad_color_logit;  // K * 3
  std::vector<double> grad_alpha_logit;  // K
};

DotLoss dot_loss(const model::Model& model, const std::vector<const data::Frame*>& frames, const DotPattern& geom,
                 const std::vector<double>& color_logit, const std::vector<double>& alpha_logit,
                 const losses::LossWeights& weights, bool want_grad) {
  const std::size_t K = geom.dots.size();
  const std::size_t h = frames[0]->camera.grid.dim(1), w = frames[0]->camera.grid.dim(2);
  Tape tape;
  const auto p = model.params().bind_frozen(tape);
  auto in = model::make_inputs(tape, frames);
  const Var cl = tape.leaf(Tensor(Shape{K, 3}, color_logit));
  const Var al = tape.leaf(Tensor(Shape{K}, alpha_logit));
  in.camera = apply_dots(in.camera, ad::sigmoid(cl), ad::sigmoid(al), geom, h, w);
  const auto out = model.forward(p, in, model::Mode::kEval);
  const auto loss = losses::total_loss(out, losses::make_targets(frames), weights);
  DotLoss res;
  res.value = loss.value;
  if (want_grad) {
    tape.backward(loss.total);
    const Tensor gc = tape.grad(cl), ga = tape.grad(al);
    res.grad_color_logit.assign(gc.data().begin(), gc.data().end());
    res.grad_alpha_logit.assign(ga.data().begin(), ga.data().end());
  }
  return res;
}

DotPattern with_params(DotPattern geom, const std::vector<double>& color_logit, const std::vector<double>& alpha_logit) {
  for (std::size_t k = 0; k < geom.dots.size(); ++k) {
    for (std::size_t ch = 0; ch < 3; ++ch) geom.dots[k].color[ch] = sigmoid(color_logit[k * 3 + ch]);
    geom.dots[k].peak_alpha = sigmoid(alpha_logit[k]);
  }
  return geom;
}

}  // namespace

double attack_loss(const model::Model& model, const std::vector<const data::Frame*>& frames,
                   const DotPattern& pattern, const losses::LossWeights& weights) {
  if (frames.empty()) throw std::invalid_argument("attack_loss: no frames");
  std::vector<data::Frame> attacked;
  attacked.reserve(frames.size());
  for (const auto* f : frames) {
    attacked.push_back(*f);
    attacked.back().camera = apply_dots(f->camera, pattern);
  }
  std::vector<const data::Frame*> ptrs;
  for (const auto& f : attacked) ptrs.push_back(&f);
  Tape tape;
  const auto p = model.params().bind_frozen(tape);
  const auto out = model.forward(p, model::make_inputs(tape, ptrs), model::Mode::kEval);
  return losses::total_loss(out, losses::make_targets(ptrs), weights).value;
}

DotTrainResult dot_attack_train(const model::Model& model, const std::vector<const data::Frame*>& frames,
                                const DotPattern& init, const DotTrainConfig& cfg) {
  if (frames.empty()) throw std::invalid_argument("dot_attack_train: no frames");
  DotTrainResult res;
  res.pattern = init;
  if (cfg.steps == 0) return res;

  const std::size_t K = init.dots.size();
  std::vector<double> color_logit(K * 3), alpha_logit(K);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t ch = 0; ch < 3; ++ch) color_logit[k * 3 + ch] = logit(init.dots[k].color[ch]);
    alpha_logit[k] = logit(init.dots[k].peak_alpha);
  }

  // The logits live in a parameter store so the shared Adam step applies.
  ad::ParameterStore store;
  store.add("color_logit", Tensor(Shape{K * 3}, color_logit));
  store.add("alpha_logit", Tensor(Shape{K}, alpha_logit));
  ad::AdamState adam;
  std::mt19937_64 rng(cfg.seed);

  std::vector<std::size_t> order(frames.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const std::size_t bs = std::min(cfg.batch_size, frames.size());

  res.initial_loss = attack_loss(model, frames, init, cfg.weights);
  res.best_loss = res.initial_loss;

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<const data::Frame*> batch;
    for (std::size_t i = 0; i < bs; ++i) batch.push_back(frames[order[i]]);

    const std::vector<double> cl(store[0].data().begin(), store[0].data().end());
    const std::vector<double> al(store[1].data().begin(), store[1].data().end());
    DotLoss l;
    try {
      l = dot_loss(model, batch, init, cl, al, cfg.weights, true);
    } catch (const losses::NumericError&) {
      res.diverged = true;
      break;
    }
    // Ascent: hand Adam the negated gradient.
    std::vector<Tensor> grads{Tensor(Shape{K * 3}), Tensor(Shape{K})};
    for (std::size_t i = 0; i < K * 3; ++i) grads[0][i] = -l.grad_color_logit[i];
    for (std::size_t i = 0; i < K; ++i) grads[1][i] = -l.grad_alpha_logit[i];
    ad::adam_step(store, grads, adam, {.lr = cfg.lr});
    ++res.steps_run;

    const std::vector<double> ncl(store[0].data().begin(), store[0].data().end());
    const std::vector<double> nal(store[1].data().begin(), store[1].data().end());
    const DotPattern candidate = with_params(init, ncl, nal);
    double full = 0.0;
    try {
      full = attack_loss(model, frames, candidate, cfg.weights);
    } catch (const losses::NumericError&) {
      res.diverged = true;
      break;
    }
    if (!std::isfinite(full)) {
      res.diverged = true;
      break;
    }
    if (full > res.best_loss) {
      res.best_loss = full;
      res.pattern = candidate;
    }
  }
  return res;
}

void save_pattern(const std::filesystem::path& path, const DotPattern& pattern) {
  binio::Writer w;
  w.u32(static_cast<std::uint32_t>(pattern.dots.size()));
  for (const Dot& d : pattern.dots) {
    w.f64(d.row);
    w.f64(d.col);
    w.f64(d.radius);
    for (double c : d.color) w.f64(c);
    w.f64(d.peak_alpha);
  }
  binio::write_container(path, kDotMagic, kDotVersion, w);
}

DotPattern load_pattern(const std::filesystem::path& path) {
  const auto payload = binio::read_container(path, kDotMagic, kDotVersion);
  binio::Reader r(payload);
  DotPattern p;
  const std::uint32_t n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    Dot d;
    d.row = r.f64();
    d.col = r.f64();
    d.radius = r.f64();
    for (double& c : d.color) c = r.f64();
    d.peak_alpha = r.f64();
    p.dots.push_back(d);
  }
  if (!r.at_end()) throw binio::FormatError(binio::FormatErrorKind::kMalformed, "trailing bytes in dot pattern");
  return p;
}

}  // namespace pcsg::attacks
