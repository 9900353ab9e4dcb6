#include "strokescope/raster.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "strokescope/errors.hpp"

namespace strokescope {

Grid::Grid(int w, int h, double fill) : w_(w), h_(h) {
  if (w <= 0 || h <= 0) throw DimensionError("grid dimensions must be positive");
  data_.assign(static_cast<std::size_t>(w) * h, fill);
}

double Grid::sum() const noexcept {
  double s = 0.0;
  for (double v : data_) s += v;
  return s;
}

std::size_t WeightMap::count() const noexcept {
  std::size_t n = 0;
  for (auto m : mask) n += m;
  return n;
}

int to_pixel(double v) noexcept { return static_cast<int>(std::floor(v + 0.5)); }

std::vector<Pixel> bresenham(Pixel p0, Pixel p1) {
  // Always walk from the lexicographically smaller endpoint so that the
  // traced set is symmetric; reverse afterwards to honour the requested order.
  const bool flip = p1 < p0;
  Pixel a = flip ? p1 : p0;
  const Pixel b = flip ? p0 : p1;

  const int dx = std::abs(b.x - a.x);
  const int dy = -std::abs(b.y - a.y);
  const int sx = a.x < b.x ? 1 : -1;
  const int sy = a.y < b.y ? 1 : -1;
  int err = dx + dy;

  std::vector<Pixel> out;
  out.reserve(static_cast<std::size_t>(std::max(dx, -dy)) + 1);
  while (true) {
    out.push_back(a);
    if (a == b) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      a.x += sx;
    }
    if (e2 <= dx) {
      err += dx;
      a.y += sy;
    }
  }
  if (flip) std::reverse(out.begin(), out.end());
  return out;
}

namespace {

// Liang-Barsky clip of a-b against [lo_x, hi_x] x [lo_y, hi_y]. Returns false
// when the segment misses the rectangle.
bool clip_segment(double& ax, double& ay, double& bx, double& by, double lo_x, double lo_y, double hi_x,
                  double hi_y) {
  const double dx = bx - ax, dy = by - ay;
  double t0 = 0.0, t1 = 1.0;
  const double p[4] = {-dx, dx, -dy, dy};
  const double q[4] = {ax - lo_x, hi_x - ax, ay - lo_y, hi_y - ay};
  for (int i = 0; i < 4; ++i) {
    if (p[i] == 0.0) {
      if (q[i] < 0.0) return false;
      continue;
    }
    const double r = q[i] / p[i];
    if (p[i] < 0.0) {
      if (r > t1) return false;
      t0 = std::max(t0, r);
    } else {
      if (r < t0) return false;
      t1 = std::min(t1, r);
    }
  }
  const double nax = ax + t0 * dx, nay = ay + t0 * dy;
  bx = ax + t1 * dx;
  by = ay + t1 * dy;
  ax = nax;
  ay = nay;
  return true;
}

void plot(RasterImage& img, const std::vector<Pixel>& pixels) {
  for (const Pixel& p : pixels) img(p.x, p.y) = 1.0;
}

bool one_point_stroke_at(const VectorSketch& s, std::size_t i) {
  const bool starts = i == 0 || s[i - 1].pen == PenState::Up;
  const bool ends = s[i].pen == PenState::Up || i + 1 == s.drawable_point_count();
  return starts && ends;
}

} // namespace

std::vector<Pixel> trace_segment(const Point& a, const Point& b, int w, int h) {
  double ax = a.x, ay = a.y, bx = b.x, by = b.y;
  // One pixel of slack on each side keeps rounding at the border unchanged.
  if (!clip_segment(ax, ay, bx, by, -1.0, -1.0, static_cast<double>(w), static_cast<double>(h))) return {};
  std::vector<Pixel> line = bresenham({to_pixel(ax), to_pixel(ay)}, {to_pixel(bx), to_pixel(by)});
  std::erase_if(line, [&](const Pixel& p) { return p.x < 0 || p.y < 0 || p.x >= w || p.y >= h; });
  return line;
}

std::vector<Pixel> stroke_trace(const Stroke& stroke, int w, int h) {
  std::vector<Pixel> out;
  const auto& pts = stroke.points;
  if (pts.size() == 1) {
    const Pixel p{to_pixel(pts[0].x), to_pixel(pts[0].y)};
    if (p.x >= 0 && p.y >= 0 && p.x < w && p.y < h) out.push_back(p);
    return out;
  }
  for (std::size_t i = 1; i < pts.size(); ++i) {
    auto seg = trace_segment(pts[i - 1], pts[i], w, h);
    out.insert(out.end(), seg.begin(), seg.end());
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

RasterImage rasterise(const VectorSketch& sketch) {
  const int w = sketch.canvas_w(), h = sketch.canvas_h();
  RasterImage img(w, h, 0.0);
  const auto pts = sketch.points();
  for (std::size_t t = 1; t < pts.size(); ++t) {
    if (sketch.segment_drawn(t)) plot(img, trace_segment(pts[t - 1], pts[t], w, h));
    if (pts[t].pen == PenState::End) break;
  }
  for (std::size_t i = 0; i < sketch.drawable_point_count(); ++i) {
    if (!one_point_stroke_at(sketch, i)) continue;
    const Pixel p{to_pixel(pts[i].x), to_pixel(pts[i].y)};
    if (img.contains(p.x, p.y)) img(p.x, p.y) = 1.0;
  }
  return img;
}

RasterImage rasterise_stroke(const Stroke& stroke, int w, int h) {
  RasterImage img(w, h, 0.0);
  plot(img, stroke_trace(stroke, w, h));
  return img;
}

WeightMap weight_map(const Stroke& stroke, int w, int h, std::vector<std::string>* warnings) {
  WeightMap wm{w, h, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h, 0)};
  const auto trace = stroke_trace(stroke, w, h);
  for (const Pixel& p : trace) wm.mask[static_cast<std::size_t>(p.y) * w + p.x] = 1;
  if (trace.empty() && warnings)
    warnings->push_back("stroke " + std::to_string(stroke.index) + " lies entirely outside the canvas");
  return wm;
}

RasterImage compose(std::span<const RasterImage> stroke_images, std::span<const WeightMap> weights) {
  if (stroke_images.empty()) throw DimensionError("compose needs at least one stroke image");
  if (stroke_images.size() != weights.size()) throw DimensionError("stroke images and weight maps differ in count");
  const int w = stroke_images[0].w(), h = stroke_images[0].h();
  RasterImage out(w, h, 0.0);
  for (std::size_t k = 0; k < stroke_images.size(); ++k) {
    const RasterImage& s = stroke_images[k];
    const WeightMap& wm = weights[k];
    if (s.w() != w || s.h() != h || wm.w != w || wm.h != h) throw DimensionError("compose: dimension mismatch");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += wm.mask[i] * s[i];
  }
  for (double& v : out.values()) v = std::min(1.0, v);
  return out;
}

StrokeLayers stroke_layers(const VectorSketch& sketch, std::vector<std::string>* warnings) {
  StrokeLayers layers;
  layers.strokes = split_strokes(sketch);
  const int w = sketch.canvas_w(), h = sketch.canvas_h();
  for (const Stroke& s : layers.strokes) {
    layers.images.push_back(rasterise_stroke(s, w, h));
    layers.weights.push_back(weight_map(s, w, h, warnings));
  }
  return layers;
}

} // namespace strokescope
