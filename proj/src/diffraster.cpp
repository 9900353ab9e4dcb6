#include "strokescope/diffraster.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <limits>

#include "strokescope/errors.hpp"

namespace strokescope {

void RenderParams::validate() const {
  if (!(slope > 0.0) || !std::isfinite(slope)) throw ValidationError("render slope must be positive");
  if (!std::isfinite(offset)) throw ValidationError("render offset must be finite");
  if (!(mask_offset > 1e3 * std::fabs(offset) / slope)) throw ValidationError("mask offset too small");
}

double sigmoid(double z) noexcept {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

SegmentDistance segment_distance(Vec2 p, Vec2 a, Vec2 b) noexcept {
  SegmentDistance out;
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double cx, cy;
  if (len2 == 0.0) {
    out.branch = DistanceBranch::Degenerate;
    cx = a.x;
    cy = a.y;
  } else {
    const double u = ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2;
    if (u <= 0.0) {
      out.branch = DistanceBranch::NearStart;
      cx = a.x;
      cy = a.y;
    } else if (u >= 1.0) {
      out.branch = DistanceBranch::NearEnd;
      cx = b.x;
      cy = b.y;
    } else {
      out.branch = DistanceBranch::Perpendicular;
      cx = a.x + u * dx;
      cy = a.y + u * dy;
    }
    if (out.branch == DistanceBranch::Perpendicular) {
      const double rx = cx - p.x, ry = cy - p.y;
      out.distance = std::sqrt(rx * rx + ry * ry);
      if (out.distance > 0.0) {
        // The foot point is stationary in u, so only the explicit dependence
        // through a + u (b - a) survives.
        const double nx = rx / out.distance, ny = ry / out.distance;
        out.d_start = {(1.0 - u) * nx, (1.0 - u) * ny};
        out.d_end = {u * nx, u * ny};
      }
      return out;
    }
  }
  const double rx = cx - p.x, ry = cy - p.y;
  out.distance = std::sqrt(rx * rx + ry * ry);
  if (out.distance > 0.0) {
    const Vec2 g{rx / out.distance, ry / out.distance};
    switch (out.branch) {
    case DistanceBranch::NearStart: out.d_start = g; break;
    case DistanceBranch::NearEnd: out.d_end = g; break;
    default:
      // Zero-length segment: both endpoints coincide, split evenly so that
      // moving the pair together recovers the full derivative.
      out.d_start = {0.5 * g.x, 0.5 * g.y};
      out.d_end = out.d_start;
      break;
    }
  }
  return out;
}

double point_segment_distance(Vec2 p, const Point& prev, const Point& cur) noexcept {
  return segment_distance(p, {prev.x, prev.y}, {cur.x, cur.y}).distance;
}

DistanceField min_distance_field(const VectorSketch& sketch, const RenderParams& params) {
  params.validate();
  const int w = sketch.canvas_w(), h = sketch.canvas_h();
  DistanceField field{w, h, Grid(w, h, std::numeric_limits<double>::infinity()),
                      std::vector<int>(static_cast<std::size_t>(w) * h, -1)};
  const auto pts = sketch.points();
  for (std::size_t t = 1; t < pts.size(); ++t) {
    const Vec2 a{pts[t - 1].x, pts[t - 1].y}, b{pts[t].x, pts[t].y};
    const double penalty = sketch.segment_drawn(t) ? 0.0 : params.mask_offset;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double d = segment_distance({static_cast<double>(x), static_cast<double>(y)}, a, b).distance + penalty;
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        if (d < field.d[i]) {
          field.d[i] = d;
          field.argmin[i] = static_cast<int>(t);
        }
      }
    }
  }
  return field;
}

SoftRenderResult soft_render_with_field(const VectorSketch& sketch, const RenderParams& params) {
  SoftRenderResult r{RasterImage(sketch.canvas_w(), sketch.canvas_h()), min_distance_field(sketch, params)};
  for (std::size_t i = 0; i < r.image.size(); ++i) r.image[i] = sigmoid(params.offset - params.slope * r.field.d[i]);
  return r;
}

RasterImage soft_render(const VectorSketch& sketch, const RenderParams& params) {
  return soft_render_with_field(sketch, params).image;
}

std::vector<Vec2> render_gradient(const VectorSketch& sketch, const RenderParams& params, const Grid& upstream) {
  const int w = sketch.canvas_w(), h = sketch.canvas_h();
  if (upstream.w() != w || upstream.h() != h) throw DimensionError("upstream gradient does not match the canvas");
  const DistanceField field = min_distance_field(sketch, params);
  const auto pts = sketch.points();
  std::vector<Vec2> grad(pts.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      const int t = field.argmin[i];
      if (t < 0 || upstream[i] == 0.0 || !sketch.segment_drawn(static_cast<std::size_t>(t))) continue;
      const double s = sigmoid(params.offset - params.slope * field.d[i]);
      // dL/dd = upstream * sigma'(z) * dz/dd with z = offset - slope * d.
      const double dl_dd = upstream[i] * s * (1.0 - s) * -params.slope;
      const SegmentDistance sd = segment_distance({static_cast<double>(x), static_cast<double>(y)},
                                                  {pts[t - 1].x, pts[t - 1].y}, {pts[t].x, pts[t].y});
      grad[t - 1].x += dl_dd * sd.d_start.x;
      grad[t - 1].y += dl_dd * sd.d_start.y;
      grad[t].x += dl_dd * sd.d_end.x;
      grad[t].y += dl_dd * sd.d_end.y;
    }
  }
  return grad;
}

std::vector<std::uint8_t> dump_distance_field(const DistanceField& field) {
  std::vector<std::uint8_t> out(field.d.size() * 4);
  for (std::size_t i = 0; i < field.d.size(); ++i) {
    std::uint32_t bits = std::bit_cast<std::uint32_t>(static_cast<float>(field.d[i]));
    for (int k = 0; k < 4; ++k) out[4 * i + k] = static_cast<std::uint8_t>(bits >> (8 * k));
  }
  return out;
}

} // namespace strokescope
