#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "strokescope/diffraster.hpp"
#include "strokescope/raster.hpp"
#include "strokescope/scorer.hpp"
#include "strokescope/sketch.hpp"

namespace testing {

using namespace strokescope;

// Random valid sketch of 2..max_points points (End excluded) on a w x h
// canvas. Pen states are drawn at random; the first point is always Down so
// every sketch has at least one drawn segment.
inline VectorSketch random_sketch(std::mt19937_64& rng, int w, int h, int max_points, bool with_end = true) {
  std::uniform_int_distribution<int> count(2, max_points);
  std::uniform_real_distribution<double> ux(0.0, w - 1.0), uy(0.0, h - 1.0), coin(0.0, 1.0);
  const int n = count(rng);
  std::vector<Point> pts;
  for (int i = 0; i < n; ++i) {
    const PenState pen = i == 0 || coin(rng) < 0.7 ? PenState::Down : PenState::Up;
    pts.push_back({ux(rng), uy(rng), pen});
  }
  if (with_end) pts.push_back({pts.back().x, pts.back().y, PenState::End});
  return VectorSketch(std::move(pts), w, h);
}

// Distance from p to segment [a, b] by the three-case rule: beyond a, beyond
// b, or perpendicular foot inside.
inline double oracle_distance(Vec2 p, Vec2 a, Vec2 b) {
  const double abx = b.x - a.x, aby = b.y - a.y;
  if ((p.x - a.x) * abx + (p.y - a.y) * aby <= 0.0) return std::hypot(p.x - a.x, p.y - a.y);
  if ((p.x - b.x) * -abx + (p.y - b.y) * -aby <= 0.0) return std::hypot(p.x - b.x, p.y - b.y);
  return std::abs(abx * (p.y - a.y) - aby * (p.x - a.x)) / std::hypot(abx, aby);
}

// Brute-force masked minimum over all segments for a single pixel.
inline double oracle_min_distance(const VectorSketch& s, int x, int y, double mask_offset) {
  double best = INFINITY;
  for (std::size_t t = 1; t < s.size(); ++t) {
    const Point& a = s[t - 1];
    const Point& b = s[t];
    const double d = oracle_distance({double(x), double(y)}, {a.x, a.y}, {b.x, b.y});
    best = std::min(best, d + (s.segment_drawn(t) ? 0.0 : mask_offset));
  }
  return best;
}

inline VectorSketch with_point(const VectorSketch& s, std::size_t t, double dx, double dy) {
  std::vector<Point> pts(s.points().begin(), s.points().end());
  pts[t].x += dx;
  pts[t].y += dy;
  return VectorSketch(std::move(pts), s.canvas_w(), s.canvas_h());
}

// Pass when |a - n| <= abs_tol, or relative to the larger magnitude <= rel_tol.
inline bool close(double analytic, double numeric, double rel_tol, double abs_tol) {
  const double diff = std::abs(analytic - numeric);
  if (diff <= abs_tol) return true;
  return diff / std::max(std::abs(analytic), std::abs(numeric)) <= rel_tol;
}

inline Scorer random_linear(int w, int h, int classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 0.1);
  std::vector<double> weights(static_cast<std::size_t>(classes) * w * h), bias(classes);
  for (double& v : weights) v = static_cast<float>(n(rng));
  for (double& v : bias) v = static_cast<float>(n(rng));
  return Scorer::linear(w, h, std::move(weights), std::move(bias));
}

} // namespace testing
