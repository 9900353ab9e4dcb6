#pragma once

#include <cstdint>
#include <vector>

#include "strokescope/raster.hpp"
#include "strokescope/sketch.hpp"

namespace strokescope {

// Soft threshold X(p) = sigmoid(offset - slope * d(p)). With the defaults a
// pixel on the polyline renders at sigmoid(2) and the 0.5 iso-line sits at
// d = 0.4 px.
struct RenderParams {
  double offset = 2.0;
  double slope = 5.0;
  double mask_offset = 1e6;  // added to the distance of segments that carry no ink

  void validate() const;  // throws ValidationError
};

double sigmoid(double z) noexcept;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

// Which branch of the point-to-segment distance produced the value.
enum class DistanceBranch { NearStart, NearEnd, Perpendicular, Degenerate };

struct SegmentDistance {
  double distance = 0.0;
  DistanceBranch branch = DistanceBranch::Degenerate;
  Vec2 d_start;  // d distance / d (x, y) of the segment start
  Vec2 d_end;    // d distance / d (x, y) of the segment end
};

// Euclidean distance from p to the closed segment [a, b], with its partial
// derivatives w.r.t. both endpoints. The derivative is taken as zero where
// the distance itself is zero.
SegmentDistance segment_distance(Vec2 p, Vec2 a, Vec2 b) noexcept;

double point_segment_distance(Vec2 p, const Point& prev, const Point& cur) noexcept;

struct DistanceField {
  int w = 0;
  int h = 0;
  Grid d;                   // masked minimum distance per pixel
  std::vector<int> argmin;  // index t of the winning segment (t-1, t); -1 when T = 1
};

// d(p) = min_t [dist(p, v_{t-1}, v_t) + mask(t) * mask_offset], pixel centres
// at integer coordinates. Ties go to the lowest t. A one-point sketch has no
// segment and yields +inf everywhere.
DistanceField min_distance_field(const VectorSketch& sketch, const RenderParams& params = {});

RasterImage soft_render(const VectorSketch& sketch, const RenderParams& params = {});

// Sum over pixels of upstream(p) * dX(p)/d(x_t, y_t) for every point t
// (End marker included, always zero). The min routes each pixel to its
// argmin segment; pen states receive no gradient.
std::vector<Vec2> render_gradient(const VectorSketch& sketch, const RenderParams& params, const Grid& upstream);

// Same as render_gradient but also returns the soft render that was used.
struct SoftRenderResult {
  RasterImage image;
  DistanceField field;
};
SoftRenderResult soft_render_with_field(const VectorSketch& sketch, const RenderParams& params = {});

// Raw little-endian float32 dump of the distance grid, row-major.
std::vector<std::uint8_t> dump_distance_field(const DistanceField& field);

} // namespace strokescope
