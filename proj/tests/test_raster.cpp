#include <doctest.h>

#include <cstdlib>
#include <random>
#include <set>

#include "strokescope/errors.hpp"
#include "strokescope/raster.hpp"
#include "support.hpp"

using namespace strokescope;

TEST_CASE("bresenham is symmetric, 8-connected and keeps both endpoints") {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> u(-20, 20);
  for (int i = 0; i < 500; ++i) {
    const Pixel a{u(rng), u(rng)}, b{u(rng), u(rng)};
    const auto fwd = bresenham(a, b);
    auto back = bresenham(b, a);
    CHECK(fwd.front() == a);
    CHECK(fwd.back() == b);
    CHECK(fwd.size() == static_cast<std::size_t>(std::max(std::abs(b.x - a.x), std::abs(b.y - a.y)) + 1));
    for (std::size_t k = 1; k < fwd.size(); ++k) {
      CHECK(std::abs(fwd[k].x - fwd[k - 1].x) <= 1);
      CHECK(std::abs(fwd[k].y - fwd[k - 1].y) <= 1);
    }
    std::reverse(back.begin(), back.end());
    CHECK(fwd == back);
  }
}

TEST_CASE("rasterise draws lines and single points") {
  const VectorSketch s({{1, 1, PenState::Down}, {5, 1, PenState::Up}, {3, 6, PenState::Up}, {0, 0, PenState::End}}, 8,
                       8);
  const auto img = rasterise(s);
  CHECK(img.sum() == 6.0);
  for (int x = 1; x <= 5; ++x) CHECK(img(x, 1) == 1.0);
  CHECK(img(3, 6) == 1.0);
  CHECK(img(0, 0) == 0.0);
}

TEST_CASE("segments leaving the canvas are clipped") {
  const VectorSketch s({{-50, 2, PenState::Down}, {50, 2, PenState::Up}}, 10, 10);
  const auto img = rasterise(s);
  CHECK(img.sum() == 10.0);
  const VectorSketch off({{-50, -3, PenState::Down}, {50, -3, PenState::Up}}, 10, 10);
  CHECK(rasterise(off).sum() == 0.0);
  std::vector<std::string> warnings;
  const auto wm = weight_map(split_strokes(off)[0], 10, 10, &warnings);
  CHECK(wm.count() == 0);
  CHECK(warnings.size() == 1);
}

TEST_CASE("composing stroke layers reproduces the direct raster") {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 50; ++i) {
    const auto s = testing::random_sketch(rng, 32, 24, 15);
    const auto layers = stroke_layers(s);
    CHECK(compose(layers.images, layers.weights) == rasterise(s));
  }
}

TEST_CASE("compose clamps overlaps and checks shapes") {
  RasterImage a(3, 1), b(3, 1);
  a(0, 0) = a(1, 0) = 1.0;
  b(1, 0) = b(2, 0) = 1.0;
  WeightMap wa{3, 1, {1, 1, 0}}, wb{3, 1, {0, 1, 1}};
  const std::vector<RasterImage> imgs{a, b};
  const std::vector<WeightMap> ws{wa, wb};
  const auto out = compose(imgs, ws);
  CHECK(out(0, 0) == 1.0);
  CHECK(out(1, 0) == 1.0);
  CHECK(out(2, 0) == 1.0);

  const std::vector<RasterImage> bad{a, RasterImage(2, 1)};
  CHECK_THROWS_AS(compose(bad, ws), DimensionError);
  const std::vector<WeightMap> one{wa};
  CHECK_THROWS_AS(compose(imgs, one), DimensionError);
}

TEST_CASE("weight map is the indicator of the stroke trace") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 20; ++i) {
    const auto s = testing::random_sketch(rng, 20, 20, 8);
    for (const auto& st : split_strokes(s)) {
      const auto trace = stroke_trace(st, 20, 20);
      const auto wm = weight_map(st, 20, 20);
      CHECK(wm.count() == trace.size());
      for (const auto& p : trace) CHECK(wm.at(p.x, p.y) == 1);
    }
  }
}
