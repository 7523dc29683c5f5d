#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "pcsg/attacks.hpp"
#include "pcsg/binio.hpp"
#include "test_frames.hpp"

using namespace pcsg;
using namespace pcsg::attacks;

namespace {

model::ModelConfig small_config() {
  model::ModelConfig c;
  c.encoder_hidden = 16;
  return c;
}

// y is on the edge of the ball when the next double outward would leave it.
bool on_edge(double x, double y, double eps, double dir) {
  const double next = std::nextafter(y, dir > 0 ? 2.0 : -1.0);
  return std::abs(y - x) <= eps && std::abs(next - x) > eps;
}

}  // namespace

TEST_CASE("fgsm with zero epsilon is the identity") {
  const model::Model m(small_config(), 1);
  const auto frames = testframes::random_frames(1, 2);
  CHECK(fgsm(m, frames[0], 0.0).camera.grid == frames[0].camera.grid);
}

TEST_CASE("fgsm stays inside the epsilon ball and reaches its edge") {
  const model::Model m(small_config(), 3);
  const auto before = m.params();
  const double eps = 0.01;
  std::size_t eligible = 0, at_edge = 0;
  for (const auto& f : testframes::random_frames(4, 4)) {
    const auto res = fgsm(m, f, eps);
    const auto x = f.camera.grid.data();
    const auto y = res.camera.grid.data();
    const auto g = res.gradient.data();
    for (std::size_t i = 0; i < x.size(); ++i) {
      REQUIRE(std::abs(y[i] - x[i]) <= eps);
      REQUIRE(y[i] >= 0.0);
      REQUIRE(y[i] <= 1.0);
      const double pushed = x[i] + eps * (g[i] > 0 ? 1.0 : -1.0);
      if (g[i] != 0.0 && pushed >= 0.0 && pushed <= 1.0) {
        ++eligible;
        if (on_edge(x[i], y[i], eps, g[i])) ++at_edge;
        REQUIRE((y[i] - x[i] > 0) == (g[i] > 0));
      }
    }
  }
  REQUIRE(eligible > 0);
  CHECK(static_cast<double>(at_edge) >= 0.99 * static_cast<double>(eligible));
  CHECK(m.params() == before);
}

TEST_CASE("fgsm pixel step is the farthest double inside the bound") {
  CHECK(fgsm_pixel(0.5, 0.25, 1.0) == 0.75);
  CHECK(std::abs(fgsm_pixel(0.5, 0.25, -1.0) - 0.5) == 0.25);
  CHECK(fgsm_pixel(0.995, 0.01, 1.0) == 1.0);
  CHECK(fgsm_pixel(0.3, 0.01, 0.0) == 0.3);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.02, 0.98);
  for (int i = 0; i < 10000; ++i) {
    const double x = u(rng);
    for (double dir : {1.0, -1.0}) {
      const double y = fgsm_pixel(x, 0.01, dir);
      REQUIRE(std::abs(y - x) <= 0.01);
      REQUIRE(on_edge(x, y, 0.01, dir));
    }
  }
}

TEST_CASE("dot blending examples") {
  sensors::FrontView img{ad::Tensor(ad::Shape{3, 32, 64}, 0.25)};
  DotPattern clear = default_pattern(1);
  for (auto& d : clear.dots) d.peak_alpha = 0.0;
  CHECK(apply_dots(img, clear).grid == img.grid);

  // One dot centred on pixel (15, 47) of a 32 x 64 image.
  Dot d;
  d.row = 15.5 / 32.0;
  d.col = 47.5 / 64.0;
  d.radius = 4.0;
  d.color = {0.9, 0.1, 0.6};
  d.peak_alpha = 1.0;
  const auto out = apply_dots(img, {{d}});
  const std::size_t plane = 32 * 64;
  for (std::size_t ch = 0; ch < 3; ++ch) CHECK(out.grid[ch * plane + 15 * 64 + 47] == d.color[ch]);
  CHECK(dot_profile(d, 15, 47, 32, 64) == 1.0);
  // Four pixels to the right sits exactly on the rim.
  CHECK(dot_profile(d, 15, 51, 32, 64) == 0.0);
  CHECK(out.grid[15 * 64 + 51] == 0.25);
  CHECK(dot_profile(d, 15, 49, 32, 64) == 0.5);
}

TEST_CASE("default pattern geometry") {
  const auto p = default_pattern(7);
  REQUIRE(p.dots.size() == 9);
  for (const auto& d : p.dots) {
    CHECK(d.peak_alpha == 0.5);
    for (double c : d.color) {
      CHECK(c > 0.2);
      CHECK(c < 0.8);
    }
  }
  CHECK(p.dots[0].row == 1.0 / 6.0);
  CHECK(p.dots[8].col == 5.0 / 6.0);
  CHECK(default_pattern(7) == p);
}

TEST_CASE("differentiable dots match the plain blend") {
  const auto frames = testframes::random_frames(2, 9);
  const auto pattern = default_pattern(3);
  ad::Tape t;
  ad::Tensor cams(ad::Shape{2, 3 * 32 * 96});
  ad::Tensor colors(ad::Shape{9, 3}), alphas(ad::Shape{9});
  for (std::size_t b = 0; b < 2; ++b)
    std::copy(frames[b].camera.grid.data().begin(), frames[b].camera.grid.data().end(),
              cams.data().begin() + static_cast<std::ptrdiff_t>(b * 3 * 32 * 96));
  for (std::size_t k = 0; k < 9; ++k) {
    alphas[k] = pattern.dots[k].peak_alpha;
    for (std::size_t c = 0; c < 3; ++c) colors[k * 3 + c] = pattern.dots[k].color[c];
  }
  const auto out = apply_dots(t.constant(cams), t.constant(colors), t.constant(alphas), pattern, 32, 96);
  for (std::size_t b = 0; b < 2; ++b) {
    const auto plain = apply_dots(frames[b].camera, pattern);
    for (std::size_t i = 0; i < plain.grid.size(); ++i)
      REQUIRE(out.value()[b * plain.grid.size() + i] == doctest::Approx(plain.grid[i]).epsilon(1e-12));
  }
}

TEST_CASE("dot training") {
  const model::Model m(small_config(), 11);
  const auto before = m.params();
  const auto frames = testframes::random_frames(4, 12);
  const auto ptrs = testframes::pointers(frames);

  DotTrainConfig none;
  none.steps = 0;
  const auto init = default_pattern(5);
  const auto idle = dot_attack_train(m, ptrs, init, none);
  CHECK(idle.pattern == init);
  CHECK(idle.steps_run == 0);

  DotTrainConfig cfg;
  cfg.steps = 4;
  cfg.batch_size = 2;
  const auto trained = dot_attack_train(m, ptrs, init, cfg);
  CHECK(trained.best_loss >= trained.initial_loss);
  CHECK(trained.best_loss == attack_loss(m, ptrs, trained.pattern, cfg.weights));
  CHECK_FALSE(trained.diverged);
  CHECK(m.params() == before);
}

TEST_CASE("dot pattern files") {
  const auto path = std::filesystem::temp_directory_path() / "pcsg_test_pattern.bin";
  auto p = default_pattern(4);
  p.dots[2].peak_alpha = 0.123456789;
  save_pattern(path, p);
  CHECK(load_pattern(path) == p);

  {
    std::ofstream os(path, std::ios::binary | std::ios::app);
    os.put('x');
  }
  CHECK_THROWS_AS(load_pattern(path), binio::FormatError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_pattern(path), binio::FormatError);
}
