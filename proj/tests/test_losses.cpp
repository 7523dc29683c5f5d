#include <chrono>
#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "pcsg/losses.hpp"
#include "pcsg/optim.hpp"
#include "test_frames.hpp"

using namespace pcsg;
using namespace pcsg::losses;
using ad::Shape;
using ad::Tape;

namespace {

Tensor as_tensor(const std::vector<Waypoint>& w) {
  Tensor t(Shape{w.size(), 2});
  for (std::size_t i = 0; i < w.size(); ++i) {
    t[2 * i] = w[i].x;
    t[2 * i + 1] = w[i].y;
  }
  return t;
}

double var_value(Var (*fn)(Var, const PenaltyContext&), const std::vector<Waypoint>& w, const PenaltyContext& ctx) {
  Tape t;
  return fn(t.leaf(as_tensor(w)), ctx).item();
}

// Reference formulas written out directly from the rule definitions.
double oracle_red(const std::vector<Waypoint>& w, const PenaltyContext& ctx) {
  if (!ctx.is_red) return 0.0;
  double s = 0.0;
  for (std::size_t t = 0; t < w.size(); ++t) s += ctx.c[t] * std::max(0.0, w[t].y - ctx.y_stop);
  return s;
}

double oracle_speed(const std::vector<Waypoint>& w, double dt) {
  const double dx = w[0].x - w[1].x, dy = w[0].y - w[1].y;
  return std::sqrt(dx * dx + dy * dy) / dt;
}

double oracle_stop(const std::vector<Waypoint>& w, const PenaltyContext& ctx) {
  return ctx.is_stop_sign ? std::max(oracle_speed(w, ctx.dt) - ctx.eps_v, 0.0) : 0.0;
}

double oracle_curve(const std::vector<Waypoint>& w, const PenaltyContext& ctx) {
  const double a = std::min(std::abs(ctx.delta_heading), std::numbers::pi / 2);
  return std::sin(a) * std::max(oracle_speed(w, ctx.dt) - ctx.v_lb, 0.0);
}

}  // namespace

TEST_CASE("policy loss examples") {
  Tape t;
  const Var truth = t.constant(as_tensor({{0, 1}, {0, 2}, {0, 3}, {0, 4}}));
  CHECK(policy_loss(truth, truth).item() == 0.0);
  CHECK(policy_loss(t.constant(as_tensor({{1, 1}, {1, 2}, {1, 3}, {1, 4}})), truth).item() == 4.0);
  const Var a = t.constant(as_tensor({{0.3, 1.7}, {0, 2}}));
  const Var b = t.constant(as_tensor({{1.7, 0.3}, {0, 2}}));
  const Var zero = t.constant(Tensor(Shape{2, 2}, 0.0));
  CHECK(policy_loss(a, zero).item() == policy_loss(b, zero).item());
}

TEST_CASE("red light penalty examples") {
  PenaltyContext ctx;
  ctx.y_stop = 5.0;
  const std::vector<Waypoint> w{{0, 4}, {0, 5}, {0, 6}, {0, 7}};
  CHECK(red_light_penalty(w, ctx) == 0.0);
  CHECK(var_value(&red_light_penalty, w, ctx) == 0.0);
  ctx.is_red = true;
  CHECK(red_light_penalty(w, ctx) == 0.75);
  CHECK(var_value(&red_light_penalty, w, ctx) == 0.75);
}

TEST_CASE("estimated speed examples") {
  CHECK(estimated_speed(std::vector<Waypoint>{{0, 0}, {0, 2}}, 0.5) == 4.0);
  CHECK(estimated_speed(std::vector<Waypoint>{{1, 1}, {1, 1}}, 0.5) == 0.0);
  const double th = 0.9;
  const Waypoint a{0.3, 1.1}, b{-0.4, 2.9};
  auto rot = [th](Waypoint p) { return Waypoint{p.x * std::cos(th) - p.y * std::sin(th), p.x * std::sin(th) + p.y * std::cos(th)}; };
  CHECK(estimated_speed(std::vector<Waypoint>{rot(a), rot(b)}, 0.5) ==
        doctest::Approx(estimated_speed(std::vector<Waypoint>{a, b}, 0.5)).epsilon(1e-14));
}

TEST_CASE("stop sign penalty examples") {
  PenaltyContext ctx;
  const std::vector<Waypoint> fast{{0, 0}, {0, 2}};
  CHECK(stop_sign_penalty(fast, ctx) == 0.0);
  ctx.is_stop_sign = true;
  CHECK(stop_sign_penalty(fast, ctx) == 3.5);
  CHECK(var_value(&stop_sign_penalty, fast, ctx) == 3.5);
  CHECK(stop_sign_penalty(std::vector<Waypoint>{{0, 0}, {0, 0.25}}, ctx) == 0.0);
}

TEST_CASE("curvature speed penalty examples") {
  PenaltyContext ctx;
  const std::vector<Waypoint> w{{0, 0}, {0, 3}};  // 6 m/s
  CHECK(curvature_speed_penalty(w, ctx) == 0.0);
  ctx.delta_heading = std::numbers::pi / 6;
  CHECK(curvature_speed_penalty(w, ctx) == doctest::Approx(2.0).epsilon(1e-15));
  ctx.delta_heading = -std::numbers::pi / 6;
  CHECK(curvature_speed_penalty(w, ctx) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(curvature_speed_penalty(std::vector<Waypoint>{{0, 0}, {0, 1}}, ctx) == 0.0);
}

TEST_CASE("penalties are non-negative and vanish exactly on their constraint sets") {
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(1234);
  std::uniform_real_distribution<double> coord(-4, 12), ystop(-2, 10), heading(-3.5, 3.5), speed_bound(0, 6);
  std::bernoulli_distribution coin(0.5), exact(0.2);
  for (int i = 0; i < 10000; ++i) {
    std::vector<Waypoint> w(4);
    for (auto& p : w) p = {coord(rng) / 4, coord(rng)};
    PenaltyContext ctx;
    ctx.is_red = coin(rng);
    ctx.y_stop = ystop(rng);
    ctx.is_stop_sign = coin(rng);
    ctx.delta_heading = exact(rng) ? 0.0 : heading(rng);
    ctx.eps_v = speed_bound(rng);
    ctx.v_lb = speed_bound(rng);
    if (exact(rng)) {
      // Land exactly on the boundaries.
      w[1] = {w[0].x, w[0].y + ctx.eps_v * ctx.dt};
      for (auto& p : w) p.y = std::min(p.y, ctx.y_stop);
    }
    const double v = oracle_speed(w, ctx.dt);

    const double red = red_light_penalty(w, ctx);
    const double stop = stop_sign_penalty(w, ctx);
    const double curve = curvature_speed_penalty(w, ctx);
    REQUIRE(red >= 0.0);
    REQUIRE(stop >= 0.0);
    REQUIRE(curve >= 0.0);

    bool behind = true;
    for (const auto& p : w) behind = behind && p.y <= ctx.y_stop;
    REQUIRE((red == 0.0) == (!ctx.is_red || behind));
    REQUIRE((stop == 0.0) == (!ctx.is_stop_sign || v <= ctx.eps_v));
    REQUIRE((curve == 0.0) == (ctx.delta_heading == 0.0 || v <= ctx.v_lb));

    REQUIRE(red == oracle_red(w, ctx));
    REQUIRE(stop == oracle_stop(w, ctx));
    REQUIRE(curve == oracle_curve(w, ctx));
    REQUIRE(var_value(&red_light_penalty, w, ctx) == doctest::Approx(red).epsilon(1e-12));
  }
  CHECK(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() < 5.0);
}

TEST_CASE("red light penalty ignores waypoints behind the line and is monotone") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  PenaltyContext ctx;
  ctx.is_red = true;
  ctx.y_stop = 4.0;
  for (int i = 0; i < 500; ++i) {
    std::vector<Waypoint> w{{0, 8 * u(rng)}, {0, 8 * u(rng)}, {0, 8 * u(rng)}, {0, 8 * u(rng)}};
    const double base = red_light_penalty(w, ctx);
    auto moved = w;
    const std::size_t k = i % 4;
    if (w[k].y < ctx.y_stop) {
      moved[k].y = ctx.y_stop * u(rng);
      CHECK(red_light_penalty(moved, ctx) == base);
    }
    moved = w;
    moved[k].y += u(rng);
    CHECK(red_light_penalty(moved, ctx) >= base);
  }
}

TEST_CASE("symmetric KL") {
  CHECK(sym_kl({0.0}, {1.0}, {1.0}, {1.0}) == 0.5);
  CHECK_THROWS_AS(sym_kl({0.0}, {0.0}, {1.0}, {1.0}), std::invalid_argument);

  std::mt19937_64 rng(77);
  std::normal_distribution<double> n(0, 1);
  for (int i = 0; i < 1000; ++i) {
    const std::size_t d = 1 + i % 6;
    std::vector<double> m1(d), v1(d), m2(d), v2(d);
    for (std::size_t k = 0; k < d; ++k) {
      m1[k] = n(rng);
      m2[k] = n(rng);
      v1[k] = std::exp(n(rng));
      v2[k] = std::exp(n(rng));
    }
    const double a = sym_kl(m1, v1, m2, v2);
    CHECK(std::abs(a - sym_kl(m2, v2, m1, v1)) <= 1e-10);
    CHECK(a > 0.0);
    CHECK(std::abs(sym_kl(m1, v1, m1, v1)) <= 1e-10);

    // The log-variance form used in training agrees.
    Tape t;
    Tensor tm1(Shape{d}, m1), tm2(Shape{d}, m2), tl1(Shape{d}), tl2(Shape{d});
    for (std::size_t k = 0; k < d; ++k) {
      tl1[k] = std::log(v1[k]);
      tl2[k] = std::log(v2[k]);
    }
    const double b = sym_kl(t.constant(tm1), t.constant(tl1), t.constant(tm2), t.constant(tl2)).item();
    CHECK(b == doctest::Approx(a).epsilon(1e-9));
  }
}

TEST_CASE("contrastive alignment examples") {
  Tape t;
  const Var mu = t.constant(Tensor(Shape{2, 3}, 0.0));
  const Var lv = t.constant(Tensor(Shape{2, 3}, 0.0));
  CHECK(contrastive_align(mu, lv, mu, lv, 1.0).item() == 0.5);

  // Far-apart off-diagonal pairs, identical diagonal pairs.
  const Var far = t.constant(Tensor(Shape{2, 1}, {0.0, 10.0}));
  const Var lv1 = t.constant(Tensor(Shape{2, 1}, 0.0));
  CHECK(contrastive_align(far, lv1, far, lv1, 5.0).item() == 0.0);

  const Var one = t.constant(Tensor(Shape{1, 3}, 0.0));
  CHECK_THROWS_AS(contrastive_align(one, one, one, one, 1.0), std::invalid_argument);

  // Pulling a diagonal pair together lowers the loss.
  auto loss_at = [&](double gap) {
    Tape tt;
    const Var a = tt.constant(Tensor(Shape{2, 1}, {0.0, 10.0}));
    const Var b = tt.constant(Tensor(Shape{2, 1}, {gap, 10.0}));
    const Var l = tt.constant(Tensor(Shape{2, 1}, 0.0));
    return contrastive_align(a, l, b, l, 5.0).item();
  };
  CHECK(loss_at(0.5) < loss_at(1.0));
}

TEST_CASE("contrastive alignment is non-negative on random batches") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0, 1);
  for (int i = 0; i < 200; ++i) {
    Tape t;
    Tensor a(Shape{3, 2}), b(Shape{3, 2}), la(Shape{3, 2}), lb(Shape{3, 2});
    for (Tensor* x : {&a, &b, &la, &lb})
      for (double& v : x->data()) v = n(rng);
    CHECK(contrastive_align(t.constant(a), t.constant(la), t.constant(b), t.constant(lb), 2.0).item() >= 0.0);
  }
}

namespace {

struct Fixture {
  model::Model net{{}, 3};
  std::vector<data::Frame> frames = testframes::random_frames(3, 41);
};

}  // namespace

TEST_CASE("total loss examples") {
  Fixture fx;
  const auto ptrs = testframes::pointers(fx.frames);
  const Targets truth = make_targets(ptrs);

  SUBCASE("degenerate weights leave only the policy term") {
    Tape t;
    const auto p = fx.net.params().bind_frozen(t);
    const auto out = fx.net.forward(p, model::make_inputs(t, ptrs), model::Mode::kEval);
    LossWeights w;
    w.eta_front = w.eta_td = w.eta_light = w.eta_stop = w.eta_align = 0.0;
    w.lambda_red = w.lambda_stop = w.lambda_speed = 0.0;
    const auto res = total_loss(out, truth, w);
    const double policy = ad::scale(policy_loss(out.waypoints, t.constant(truth.waypoints)), 1.0 / 3.0).item();
    CHECK(res.value == policy);
  }

  SUBCASE("breakdown sums to the total") {
    Tape t;
    const auto p = fx.net.params().bind_frozen(t);
    const auto out = fx.net.forward(p, model::make_inputs(t, ptrs), model::Mode::kEval);
    const auto res = total_loss(out, truth, {});
    double sum = 0.0;
    for (const auto& term : res.terms) sum += term.weighted;
    CHECK(std::abs(sum - res.value) <= 1e-12);
    CHECK(res.terms.size() == 9);
    CHECK(res.log_line().find("p_red=") != std::string::npos);
  }

  SUBCASE("penalty weights do not matter when every constraint holds") {
    auto feasible = fx.frames;
    for (auto& f : feasible) {
      f.is_red = false;
      f.stop_sign_flag = 0.0;
      f.delta_heading = 0.0;
    }
    const auto fp = testframes::pointers(feasible);
    const Targets ft = make_targets(fp);
    auto value = [&](double lambda) {
      Tape t;
      const auto p = fx.net.params().bind_frozen(t);
      const auto out = fx.net.forward(p, model::make_inputs(t, fp), model::Mode::kEval);
      LossWeights w;
      w.lambda_red = w.lambda_stop = w.lambda_speed = lambda;
      return total_loss(out, ft, w).value;
    };
    CHECK(value(0.0) == value(7.5));
  }

  SUBCASE("a single frame uses its own alignment divergence") {
    const std::vector<const data::Frame*> one{ptrs[0]};
    Tape t;
    const auto p = fx.net.params().bind_frozen(t);
    const auto out = fx.net.forward(p, model::make_inputs(t, one), model::Mode::kEval);
    const auto res = total_loss(out, make_targets(one), {});
    const double kl = sym_kl(out.mu_img, out.logvar_img, out.mu_lidar, out.logvar_lidar).item();
    CHECK(res.term("align") == kl);
  }
}

TEST_CASE("penalty gradients pass grad_check away from kinks") {
  std::mt19937_64 rng(19);
  PenaltyContext ctx;
  ctx.is_red = true;
  ctx.y_stop = 3.0;
  ctx.is_stop_sign = true;
  ctx.delta_heading = 0.4;
  const Tensor w = as_tensor({{0.2, 1.0}, {0.5, 3.7}, {0.7, 5.2}, {0.4, 8.9}});
  CHECK(ad::grad_check([&](Tape&, Var x) { return red_light_penalty(x, ctx); }, w) <= 1e-4);
  CHECK(ad::grad_check([&](Tape&, Var x) { return stop_sign_penalty(x, ctx); }, w) <= 1e-4);
  CHECK(ad::grad_check([&](Tape&, Var x) { return curvature_speed_penalty(x, ctx); }, w) <= 1e-4);

  Tensor mu(Shape{3, 4}), lv(Shape{3, 4});
  std::normal_distribution<double> n(0, 1);
  for (double& v : mu.data()) v = n(rng);
  for (double& v : lv.data()) v = 0.3 * n(rng);
  auto align = [&](Tape& t, Var x) { return contrastive_align(x, t.constant(lv), t.constant(mu), t.constant(lv), 50.0); };
  CHECK(ad::grad_check(align, mu) <= 1e-4);
}
