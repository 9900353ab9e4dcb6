#include "strokescope/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>

#include "strokescope/diffraster.hpp"
#include "strokescope/errors.hpp"
#include "strokescope/image_io.hpp"
#include "strokescope/raster.hpp"

namespace strokescope {

namespace {

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

// Corners of the polygon (or a dense ring for the circle), closed.
std::vector<Vec2> corners(const ShapeSpec& s) {
  int n = 0;
  double phase = s.theta;
  switch (s.cls) {
  case ShapeClass::Circle: n = 48; break;
  case ShapeClass::Square: n = 4; phase += std::numbers::pi / 4; break;
  case ShapeClass::Triangle: n = 3; phase -= std::numbers::pi / 2; break;
  }
  std::vector<Vec2> out;
  for (int k = 0; k <= n; ++k) {
    const double a = phase + 2.0 * std::numbers::pi * k / n;
    out.push_back({s.cx + s.radius * std::cos(a), s.cy + s.radius * std::sin(a)});
  }
  return out;
}

Point jittered(Vec2 p, Rng& rng, double sigma) {
  std::normal_distribution<double> n(0.0, sigma);
  return {p.x + n(rng), p.y + n(rng), PenState::Down};
}

std::vector<Stroke> to_strokes(std::vector<std::vector<Point>> runs) {
  std::vector<Stroke> out;
  for (auto& r : runs) {
    Stroke s;
    s.points = std::move(r);
    out.push_back(std::move(s));
  }
  return out;
}

VectorSketch assemble(std::vector<std::vector<Point>> runs, int canvas) {
  const Point last = runs.back().back();
  const auto strokes = to_strokes(std::move(runs));
  return merge_strokes(strokes, canvas, canvas, last);
}

} // namespace

std::string_view to_string(ShapeClass c) noexcept {
  switch (c) {
  case ShapeClass::Circle: return "circle";
  case ShapeClass::Square: return "square";
  case ShapeClass::Triangle: return "triangle";
  }
  return "?";
}

ShapeConfig ShapeConfig::for_canvas(int n) {
  ShapeConfig c;
  const double k = n / static_cast<double>(c.canvas);
  c.canvas = n;
  c.min_radius *= k;
  c.max_radius *= k;
  c.centre_jitter *= k;
  c.point_jitter *= k;
  c.min_step *= k;
  c.max_step *= k;
  return c;
}

ShapeSpec random_shape_spec(Rng& rng, const ShapeConfig& cfg, int cls) {
  ShapeSpec s;
  s.cls = static_cast<ShapeClass>(cls >= 0 ? cls : std::uniform_int_distribution<int>(0, kShapeClassCount - 1)(rng));
  const double c = cfg.canvas / 2.0;
  s.cx = c + uniform(rng, -cfg.centre_jitter, cfg.centre_jitter);
  s.cy = c + uniform(rng, -cfg.centre_jitter, cfg.centre_jitter);
  s.radius = uniform(rng, cfg.min_radius, cfg.max_radius);
  s.theta = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  return s;
}

VectorSketch draw_shape(const ShapeSpec& spec, Rng& rng, const ShapeConfig& cfg) {
  // Sample the closed outline densely, then cut it into strokes: at corners
  // with some probability, at a few random places along circles, and around
  // one short piece of 3-5 points when requested.
  const auto vs = corners(spec);
  const double step = uniform(rng, cfg.min_step, cfg.max_step);
  std::vector<Vec2> path{vs.front()};
  std::vector<std::size_t> corner_at;
  for (std::size_t k = 0; k + 1 < vs.size(); ++k) {
    const Vec2 a = vs[k], b = vs[k + 1];
    const int pieces = std::max(1, static_cast<int>(std::lround(std::hypot(b.x - a.x, b.y - a.y) / step)));
    for (int i = 1; i <= pieces; ++i) {
      const double u = static_cast<double>(i) / pieces;
      path.push_back({a.x + u * (b.x - a.x), a.y + u * (b.y - a.y)});
    }
    corner_at.push_back(path.size() - 1);
  }
  const std::size_t last = path.size() - 1;
  std::vector<std::size_t> cuts{0, last};
  if (cfg.strokes > 0) {
    // Start the closed path at a random vertex so no cut is forced at a corner.
    const std::size_t shift = std::uniform_int_distribution<std::size_t>(0, last - 1)(rng);
    std::rotate(path.begin(), path.begin() + static_cast<std::ptrdiff_t>(shift), path.begin() + static_cast<std::ptrdiff_t>(last));
    path.back() = path.front();
    const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(cfg.strokes), last);
    for (std::size_t k = 1; k < n; ++k) cuts.push_back(k * last / n);
  } else if (spec.cls == ShapeClass::Circle) {
    const int arcs = std::uniform_int_distribution<int>(1, 3)(rng);
    for (int k = 0; k < arcs; ++k) cuts.push_back(std::uniform_int_distribution<std::size_t>(2, last - 2)(rng));
  } else {
    for (std::size_t k = 0; k + 1 < corner_at.size(); ++k)
      if (uniform(rng, 0.0, 1.0) < cfg.lift_probability) cuts.push_back(corner_at[k]);
  }
  if (cfg.short_piece && cfg.strokes <= 0) {
    const std::size_t short_len = std::uniform_int_distribution<std::size_t>(2, 4)(rng);
    const std::size_t short_start = std::uniform_int_distribution<std::size_t>(0, last - short_len)(rng);
    cuts.push_back(short_start);
    cuts.push_back(short_start + short_len);
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  std::vector<std::vector<Point>> runs;
  for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
    runs.emplace_back();
    for (std::size_t i = cuts[c]; i <= cuts[c + 1]; ++i) runs.back().push_back(jittered(path[i], rng, cfg.point_jitter));
  }
  return assemble(std::move(runs), cfg.canvas);
}

RasterImage shape_silhouette(const ShapeSpec& spec, int canvas) {
  const auto vs = corners(spec);
  RasterImage img(canvas, canvas);
  for (int y = 0; y < canvas; ++y)
    for (int x = 0; x < canvas; ++x) {
      // Even-odd crossing test against the closed polygon.
      bool inside = false;
      for (std::size_t k = 0; k + 1 < vs.size(); ++k) {
        const Vec2 a = vs[k], b = vs[k + 1];
        if ((a.y > y) != (b.y > y) && x < (b.x - a.x) * (y - a.y) / (b.y - a.y) + a.x) inside = !inside;
      }
      img(x, y) = inside ? 1.0 : 0.0;
    }
  return img;
}

std::vector<Point> noise_stroke(Rng& rng, const ShapeSpec& spec, int canvas) {
  const double k = canvas / 48.0;
  const double lo = 2.0 * k, hi = canvas - 3.0 * k;
  Vec2 start{uniform(rng, lo, hi), uniform(rng, lo, hi)};
  for (int tries = 0; tries < 64; ++tries) {
    if (std::hypot(start.x - spec.cx, start.y - spec.cy) > spec.radius + 4.0 * k) break;
    start = {uniform(rng, lo, hi), uniform(rng, lo, hi)};
  }
  const int n = std::uniform_int_distribution<int>(2, 5)(rng);
  std::vector<Point> pts{{start.x, start.y, PenState::Down}};
  double heading = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  for (int i = 1; i < n; ++i) {
    heading += uniform(rng, -1.2, 1.2);
    const double len = uniform(rng, 2.5, 5.5) * k;
    const Point& p = pts.back();
    pts.push_back({std::clamp(p.x + len * std::cos(heading), 1.0, canvas - 2.0),
                   std::clamp(p.y + len * std::sin(heading), 1.0, canvas - 2.0), PenState::Down});
  }
  return pts;
}

NoisySketch inject_noise(const VectorSketch& clean, int count, const ShapeSpec& spec, Rng& rng,
                         bool random_positions) {
  std::vector<Stroke> strokes = split_strokes(clean);
  std::vector<bool> is_noise(strokes.size(), false);
  for (int k = 0; k < count; ++k) {
    Stroke s;
    s.points = noise_stroke(rng, spec, clean.canvas_w());
    std::size_t at = strokes.size();
    if (random_positions) at = std::uniform_int_distribution<std::size_t>(0, strokes.size())(rng);
    strokes.insert(strokes.begin() + static_cast<std::ptrdiff_t>(at), std::move(s));
    is_noise.insert(is_noise.begin() + static_cast<std::ptrdiff_t>(at), true);
  }
  // Every stroke is closed with Up before re-assembly, including the old last one.
  for (auto& s : strokes) s.points.back().pen = PenState::Up;
  const Point last = strokes.back().points.back();
  NoisySketch out{merge_strokes(strokes, clean.canvas_w(), clean.canvas_h(), last), {}};
  for (std::size_t i = 0; i < is_noise.size(); ++i)
    if (is_noise[i]) out.noise_strokes.push_back(i);
  return out;
}

std::vector<LabeledSketch> shapes_corpus(int per_class, std::uint64_t seed, const ShapeConfig& cfg) {
  Rng rng(seed);
  std::vector<LabeledSketch> out;
  for (int i = 0; i < per_class; ++i)
    for (int c = 0; c < kShapeClassCount; ++c) {
      const ShapeSpec spec = random_shape_spec(rng, cfg, c);
      out.push_back({draw_shape(spec, rng, cfg), c});
    }
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

std::vector<LabeledImage> training_images(const std::vector<LabeledSketch>& corpus, bool with_soft) {
  std::vector<LabeledImage> out;
  for (const auto& ex : corpus) {
    out.push_back({rasterise(ex.sketch), ex.label});
    if (with_soft) out.push_back({soft_render(ex.sketch), ex.label});
  }
  return out;
}

std::vector<RetrievalItem> retrieval_corpus(int count, std::uint64_t seed, int max_noise, const ShapeConfig& cfg) {
  Rng rng(seed);
  std::vector<RetrievalItem> out;
  for (int i = 0; i < count; ++i) {
    const ShapeSpec spec = random_shape_spec(rng, cfg);
    const VectorSketch clean = draw_shape(spec, rng, cfg);
    const int noise = std::uniform_int_distribution<int>(0, max_noise)(rng);
    NoisySketch ns = inject_noise(clean, noise, spec, rng, true);
    RetrievalItem item{i, spec, std::move(ns.sketch), shape_silhouette(spec, cfg.canvas), std::move(ns.noise_strokes),
                       clean};
    out.push_back(std::move(item));
  }
  return out;
}

namespace {

// Drops one stroke chosen uniformly outside `skip`.
std::optional<VectorSketch> drop_random_stroke(const VectorSketch& sketch, const std::vector<std::size_t>& skip,
                                               Rng& rng) {
  auto strokes = split_strokes(sketch);
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < strokes.size(); ++i)
    if (std::find(skip.begin(), skip.end(), i) == skip.end()) pool.push_back(i);
  if (pool.size() < 2) return std::nullopt;
  const std::size_t victim = pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
  strokes.erase(strokes.begin() + static_cast<std::ptrdiff_t>(victim));
  return merge_strokes(strokes, sketch.canvas_w(), sketch.canvas_h());
}

} // namespace

std::vector<EmbeddingPair> embedding_pairs(const std::vector<RetrievalItem>& items, bool degraded,
                                           std::uint64_t seed) {
  Rng rng(seed);
  std::vector<EmbeddingPair> out;
  for (const auto& it : items) {
    const RasterImage& photo = it.photo;
    EmbeddingPair clean{rasterise(it.clean), photo, it.instance, {}};
    if (degraded) {
      if (!it.noise_strokes.empty()) clean.degraded.push_back(rasterise(it.sketch));
      if (auto partial = drop_random_stroke(it.clean, {}, rng)) clean.degraded.push_back(rasterise(*partial));
    }
    out.push_back(std::move(clean));
    if (it.noise_strokes.empty()) continue;
    EmbeddingPair noisy{rasterise(it.sketch), photo, it.instance, {}};
    if (degraded) {
      if (auto partial = drop_random_stroke(it.sketch, it.noise_strokes, rng)) noisy.degraded.push_back(rasterise(*partial));
    }
    out.push_back(std::move(noisy));
  }
  return out;
}

std::vector<LabeledSketch> load_labeled_ndjson(const std::filesystem::path& path, int canvas,
                                               std::vector<std::string>* class_names) {
  const auto drawings = parse_ndjson_drawings(read_file(path));
  std::map<std::string, int> ids;
  for (const auto& d : drawings) ids.emplace(d.label, 0);
  int next = 0;
  for (auto& [name, id] : ids) id = next++;
  if (class_names) {
    class_names->clear();
    for (const auto& [name, id] : ids) class_names->push_back(name);
  }
  std::vector<LabeledSketch> out;
  for (const auto& d : drawings) out.push_back({normalize(d.sketch, canvas, canvas), ids.at(d.label)});
  return out;
}

} // namespace strokescope
