#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "strokescope/sketch.hpp"

namespace strokescope {

struct Pixel {
  int x = 0;
  int y = 0;
  friend bool operator==(const Pixel&, const Pixel&) = default;
  friend auto operator<=>(const Pixel&, const Pixel&) = default;
};

// Row-major h x w grid of doubles. Used both for images (intensity in [0,1],
// ink = 1) and for real-valued maps such as pixel gradients.
class Grid {
public:
  Grid() = default;
  Grid(int w, int h, double fill = 0.0);

  int w() const noexcept { return w_; }
  int h() const noexcept { return h_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool contains(int x, int y) const noexcept { return x >= 0 && y >= 0 && x < w_ && y < h_; }

  double& operator()(int x, int y) { return data_[static_cast<std::size_t>(y) * w_ + x]; }
  double operator()(int x, int y) const { return data_[static_cast<std::size_t>(y) * w_ + x]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  double sum() const noexcept;
  bool same_shape(const Grid& o) const noexcept { return w_ == o.w_ && h_ == o.h_; }

  friend bool operator==(const Grid&, const Grid&) = default;

private:
  int w_ = 0;
  int h_ = 0;
  std::vector<double> data_;
};

using RasterImage = Grid;

struct WeightMap {
  int w = 0;
  int h = 0;
  std::vector<std::uint8_t> mask;  // row-major, 1 = on the stroke's trace

  std::uint8_t at(int x, int y) const { return mask[static_cast<std::size_t>(y) * w + x]; }
  std::size_t count() const noexcept;
};

// Rounds a canvas coordinate to its pixel (pixel centres sit on integers).
int to_pixel(double v) noexcept;

// 8-connected Bresenham line including both endpoints. The pixel set does not
// depend on the direction of traversal.
std::vector<Pixel> bresenham(Pixel p0, Pixel p1);

// Pixels of the segment a-b on a w x h canvas: the segment is clipped to the
// canvas neighbourhood, endpoints are rounded, the line is traced and
// off-canvas pixels are dropped.
std::vector<Pixel> trace_segment(const Point& a, const Point& b, int w, int h);

// Sorted, de-duplicated in-canvas pixels covered by a stroke: the union of
// its segment traces, or the single rounded pixel of a one-point stroke.
std::vector<Pixel> stroke_trace(const Stroke& stroke, int w, int h);

// Bresenham rendering of every drawn segment, stopping at End. One-point
// strokes render their single pixel.
RasterImage rasterise(const VectorSketch& sketch);

RasterImage rasterise_stroke(const Stroke& stroke, int w, int h);

// Indicator of the stroke's trace. A stroke with no pixel on the canvas yields
// an all-zero mask and a message appended to `warnings` (if given).
WeightMap weight_map(const Stroke& stroke, int w, int h, std::vector<std::string>* warnings = nullptr);

// X(p) = min(1, sum_k w_k(p) * S_k(p)). Throws DimensionError on any shape
// mismatch or when the lists differ in length.
RasterImage compose(std::span<const RasterImage> stroke_images, std::span<const WeightMap> weights);

// Per-stroke images and weight maps of a sketch, in stroke order.
struct StrokeLayers {
  std::vector<Stroke> strokes;
  std::vector<RasterImage> images;
  std::vector<WeightMap> weights;
};
StrokeLayers stroke_layers(const VectorSketch& sketch, std::vector<std::string>* warnings = nullptr);

} // namespace strokescope
