#include "strokescope/sketch.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <optional>
#include <limits>

#include <json.hpp>

#include "strokescope/errors.hpp"

namespace strokescope {

using nlohmann::json;

namespace {

PenState pen_from_one_hot(const json& down, const json& up, const json& end, std::size_t index) {
  auto bit = [&](const json& v) -> int {
    if (!v.is_number())
      throw ValidationError("point " + std::to_string(index) + ": pen state must be numeric");
    const double d = v.get<double>();
    if (d == 0.0) return 0;
    if (d == 1.0) return 1;
    throw ValidationError("point " + std::to_string(index) + ": pen state is not one-hot");
  };
  const int qd = bit(down), qu = bit(up), qe = bit(end);
  if (qd + qu + qe != 1)
    throw ValidationError("point " + std::to_string(index) + ": pen state is not one-hot");
  if (qd) return PenState::Down;
  if (qu) return PenState::Up;
  return PenState::End;
}

json coordinate_json(double v) {
  constexpr double kExactInt = 9007199254740992.0;  // 2^53
  if (std::isfinite(v) && std::floor(v) == v && std::fabs(v) < kExactInt && !(v == 0.0 && std::signbit(v)))
    return static_cast<std::int64_t>(v);
  return v;
}

double coordinate(const json& v, std::size_t offset) {
  if (!v.is_number()) throw ParseError("coordinate must be a number", offset);
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ValidationError("coordinate is not finite");
  return d;
}

json parse_json(std::string_view text, std::size_t base_offset) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    // nlohmann reports the 1-based position of the offending byte.
    const std::size_t at = e.byte > 0 ? e.byte - 1 : 0;
    throw ParseError(std::string("malformed JSON: ") + e.what(), base_offset + at);
  }
}

VectorSketch from_stroke5_json(const json& doc) {
  if (!doc.is_object()) throw ParseError("stroke-5 document must be an object", 0);
  int w = kDefaultCanvas, h = kDefaultCanvas;
  if (auto it = doc.find("canvas"); it != doc.end()) {
    if (!it->is_array() || it->size() != 2 || !(*it)[0].is_number_integer() ||
        !(*it)[1].is_number_integer())
      throw ParseError("\"canvas\" must be [W,H] integers", 0);
    w = (*it)[0].get<int>();
    h = (*it)[1].get<int>();
  }
  auto pts = doc.find("points");
  if (pts == doc.end() || !pts->is_array()) throw ParseError("missing \"points\" array", 0);
  std::vector<Point> points;
  points.reserve(pts->size());
  for (std::size_t i = 0; i < pts->size(); ++i) {
    const json& p = (*pts)[i];
    if (!p.is_array() || p.size() != 5)
      throw ParseError("point " + std::to_string(i) + " must have five elements", 0);
    points.push_back({coordinate(p[0], 0), coordinate(p[1], 0), pen_from_one_hot(p[2], p[3], p[4], i)});
  }
  return VectorSketch(std::move(points), w, h);
}

// QuickDraw simplified layout: {"strokes":[[[x...],[y...]], ...]} with
// absolute coordinates and an implicit pen lift at the end of every stroke.
std::vector<Point> from_quickdraw_strokes(const json& strokes, std::size_t offset) {
  if (!strokes.is_array()) throw ParseError("\"strokes\" must be an array", offset);
  std::vector<Point> points;
  for (const json& s : strokes) {
    if (!s.is_array() || s.size() < 2 || !s[0].is_array() || !s[1].is_array())
      throw ParseError("stroke must be [[x...],[y...]]", offset);
    const json& xs = s[0];
    const json& ys = s[1];
    if (xs.size() != ys.size()) throw ParseError("stroke x/y arrays differ in length", offset);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const bool last = i + 1 == xs.size();
      points.push_back({coordinate(xs[i], offset), coordinate(ys[i], offset),
                        last ? PenState::Up : PenState::Down});
    }
  }
  return points;
}

// Delta triplets [dx, dy, lift]: lift = 1 means the pen leaves the paper
// after this point.
std::vector<Point> from_stroke3_deltas(const json& rows, std::size_t offset) {
  if (!rows.is_array()) throw ParseError("stroke-3 data must be an array", offset);
  std::vector<Point> points;
  double x = 0.0, y = 0.0;
  for (const json& r : rows) {
    if (!r.is_array() || r.size() != 3) throw ParseError("stroke-3 row must have three elements", offset);
    x += coordinate(r[0], offset);
    y += coordinate(r[1], offset);
    if (!r[2].is_number()) throw ParseError("lift flag must be numeric", offset);
    const double lift = r[2].get<double>();
    if (lift != 0.0 && lift != 1.0) throw ValidationError("lift flag must be 0 or 1");
    points.push_back({x, y, lift == 1.0 ? PenState::Up : PenState::Down});
  }
  return points;
}

LabeledDrawing drawing_from_line(std::string_view line, std::size_t offset) {
  const json doc = parse_json(line, offset);
  int w = kDefaultCanvas, h = kDefaultCanvas;
  std::vector<Point> points;
  std::string label;
  if (doc.is_array()) {
    points = from_stroke3_deltas(doc, offset);
  } else if (doc.is_object()) {
    if (auto it = doc.find("strokes"); it != doc.end())
      points = from_quickdraw_strokes(*it, offset);
    else if (auto d = doc.find("stroke3"); d != doc.end())
      points = from_stroke3_deltas(*d, offset);
    else
      throw ParseError("expected \"strokes\" or \"stroke3\"", offset);
    if (auto c = doc.find("canvas"); c != doc.end()) {
      if (!c->is_array() || c->size() != 2) throw ParseError("\"canvas\" must be [W,H]", offset);
      w = (*c)[0].get<int>();
      h = (*c)[1].get<int>();
    }
    for (const char* key : {"label", "word"}) {
      if (auto l = doc.find(key); l != doc.end() && l->is_string()) {
        label = l->get<std::string>();
        break;
      }
      if (auto l = doc.find(key); l != doc.end() && l->is_number_integer()) {
        label = std::to_string(l->get<long long>());
        break;
      }
    }
  } else {
    throw ParseError("drawing line must be an object or array", offset);
  }
  if (points.empty()) throw ValidationError("empty drawing");
  return {VectorSketch(std::move(points), w, h), std::move(label)};
}

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

template <typename Fn>
void for_each_line(std::string_view data, Fn&& fn) {
  std::size_t start = 0;
  while (start <= data.size()) {
    std::size_t end = data.find('\n', start);
    if (end == std::string_view::npos) end = data.size();
    std::string_view line = data.substr(start, end - start);
    if (!is_blank(line) && !fn(line, start)) return;
    if (end == data.size()) break;
    start = end + 1;
  }
}

} // namespace

VectorSketch::VectorSketch(std::vector<Point> points, int canvas_w, int canvas_h)
    : points_(std::move(points)), canvas_w_(canvas_w), canvas_h_(canvas_h) {
  if (canvas_w_ <= 0 || canvas_h_ <= 0) throw ValidationError("canvas dimensions must be positive");
  if (points_.empty()) throw ValidationError("empty drawing");
  bool any_down = false;
  for (std::size_t i = 0; i < points_.size(); ++i) {
    const Point& p = points_[i];
    if (!std::isfinite(p.x) || !std::isfinite(p.y))
      throw ValidationError("point " + std::to_string(i) + " has a non-finite coordinate");
    if (p.pen == PenState::End && i + 1 != points_.size())
      throw ValidationError("End pen state at point " + std::to_string(i) + " is not last");
    any_down = any_down || p.pen == PenState::Down;
  }
  if (!any_down) throw ValidationError("sketch has no pen-down point");
}

bool VectorSketch::segment_drawn(std::size_t t) const noexcept {
  return points_[t - 1].pen == PenState::Down && points_[t].pen != PenState::End;
}

VectorSketch parse_vector_sketch(std::string_view data, SketchFormat format) {
  if (format == SketchFormat::Stroke5Json) return from_stroke5_json(parse_json(data, 0));
  std::optional<VectorSketch> out;
  for_each_line(data, [&](std::string_view line, std::size_t offset) {
    out.emplace(drawing_from_line(line, offset).sketch);
    return false;
  });
  if (!out) throw ValidationError("empty drawing");
  return *std::move(out);
}

std::vector<LabeledDrawing> parse_ndjson_drawings(std::string_view data) {
  std::vector<LabeledDrawing> out;
  for_each_line(data, [&](std::string_view line, std::size_t offset) {
    out.push_back(drawing_from_line(line, offset));
    return true;
  });
  return out;
}

std::string serialize_stroke5(const VectorSketch& sketch) {
  json pts = json::array();
  auto emit = [&](const Point& p) {
    pts.push_back({coordinate_json(p.x), coordinate_json(p.y), p.pen == PenState::Down ? 1 : 0,
                   p.pen == PenState::Up ? 1 : 0, p.pen == PenState::End ? 1 : 0});
  };
  for (const Point& p : sketch.points()) emit(p);
  if (!sketch.has_end()) {
    const Point& last = sketch.points().back();
    emit({last.x, last.y, PenState::End});
  }
  json doc;
  doc["canvas"] = {sketch.canvas_w(), sketch.canvas_h()};
  doc["points"] = std::move(pts);
  return doc.dump();
}

VectorSketch normalize(const VectorSketch& sketch, int target_w, int target_h, double margin) {
  if (target_w <= 0 || target_h <= 0) throw ValidationError("target canvas must be positive");
  if (!(margin >= 0.0 && margin < 0.5)) throw ValidationError("margin must lie in [0, 0.5)");

  double min_x = std::numeric_limits<double>::infinity(), max_x = -min_x;
  double min_y = min_x, max_y = -min_x;
  for (const Point& p : sketch.points()) {
    min_x = std::min(min_x, p.x);
    max_x = std::max(max_x, p.x);
    min_y = std::min(min_y, p.y);
    max_y = std::max(max_y, p.y);
  }
  const double bw = max_x - min_x, bh = max_y - min_y;
  const double avail_w = target_w * (1.0 - 2.0 * margin);
  const double avail_h = target_h * (1.0 - 2.0 * margin);
  double scale = 0.0;
  if (bw > 0.0 && bh > 0.0)
    scale = std::min(avail_w / bw, avail_h / bh);
  else if (bw > 0.0)
    scale = avail_w / bw;
  else if (bh > 0.0)
    scale = avail_h / bh;

  const double cx = 0.5 * (min_x + max_x), cy = 0.5 * (min_y + max_y);
  const double tx = 0.5 * target_w, ty = 0.5 * target_h;
  std::vector<Point> out(sketch.points().begin(), sketch.points().end());
  for (Point& p : out) {
    p.x = tx + (p.x - cx) * scale;
    p.y = ty + (p.y - cy) * scale;
  }
  return VectorSketch(std::move(out), target_w, target_h);
}

std::vector<Stroke> split_strokes(const VectorSketch& sketch) {
  std::vector<Stroke> strokes;
  const auto pts = sketch.points();
  const std::size_t n = sketch.drawable_point_count();
  Stroke cur;
  auto close = [&] {
    if (cur.points.empty()) return;
    cur.index = strokes.size();
    cur.length_points = cur.points.size();
    cur.length_px = 0.0;
    for (std::size_t i = 1; i < cur.points.size(); ++i)
      cur.length_px += std::hypot(cur.points[i].x - cur.points[i - 1].x, cur.points[i].y - cur.points[i - 1].y);
    strokes.push_back(std::move(cur));
    cur = Stroke{};
  };
  for (std::size_t i = 0; i < n; ++i) {
    if (cur.points.empty()) cur.first_point = i;
    cur.points.push_back(pts[i]);
    if (pts[i].pen == PenState::Up) close();
  }
  close();
  return strokes;
}

VectorSketch merge_strokes(std::span<const Stroke> strokes, int canvas_w, int canvas_h,
                           std::optional<Point> end_marker) {
  std::vector<Point> out;
  for (std::size_t s = 0; s < strokes.size(); ++s) {
    const auto& pts = strokes[s].points;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      Point p = pts[i];
      if (i + 1 < pts.size())
        p.pen = PenState::Down;
      else if (s + 1 < strokes.size())
        p.pen = PenState::Up;
      out.push_back(p);
    }
  }
  if (end_marker) out.push_back({end_marker->x, end_marker->y, PenState::End});
  return VectorSketch(std::move(out), canvas_w, canvas_h);
}

std::vector<std::size_t> point_stroke_index(const VectorSketch& sketch) {
  std::vector<std::size_t> owner(sketch.drawable_point_count());
  for (const Stroke& s : split_strokes(sketch))
    for (std::size_t i = 0; i < s.length_points; ++i) owner[s.first_point + i] = s.index;
  return owner;
}

std::string_view to_string(PenState pen) noexcept {
  switch (pen) {
  case PenState::Down: return "down";
  case PenState::Up: return "up";
  case PenState::End: return "end";
  }
  return "?";
}

} // namespace strokescope
