#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace strokescope {

// One-hot pen state of a stroke-5 point: (1,0,0) Down, (0,1,0) Up, (0,0,1) End.
// The state describes the pen *after* the point, so a Down point is joined to
// its successor and an Up point closes the current stroke.
enum class PenState { Down, Up, End };

struct Point {
  double x = 0.0;
  double y = 0.0;
  PenState pen = PenState::Down;

  friend bool operator==(const Point&, const Point&) = default;
};

inline constexpr int kDefaultCanvas = 256;
inline constexpr double kDefaultMargin = 0.05;

// Ordered stroke-5 point list on a w x h canvas. Immutable; the constructor
// enforces the structural invariants and throws ValidationError otherwise:
//   - at least one point
//   - at most one End point, and only in last position
//   - at least one Down point
class VectorSketch {
public:
  VectorSketch(std::vector<Point> points, int canvas_w, int canvas_h);

  std::span<const Point> points() const noexcept { return points_; }
  const Point& operator[](std::size_t i) const { return points_[i]; }
  std::size_t size() const noexcept { return points_.size(); }
  int canvas_w() const noexcept { return canvas_w_; }
  int canvas_h() const noexcept { return canvas_h_; }
  bool has_end() const noexcept { return !points_.empty() && points_.back().pen == PenState::End; }

  // Number of points that belong to strokes (End marker excluded).
  std::size_t drawable_point_count() const noexcept {
    return has_end() ? points_.size() - 1 : points_.size();
  }

  // True when the segment (t-1, t) carries ink: the pen was down after
  // point t-1 and point t is not the End marker. Requires 1 <= t < size().
  bool segment_drawn(std::size_t t) const noexcept;

  friend bool operator==(const VectorSketch&, const VectorSketch&) = default;

private:
  std::vector<Point> points_;
  int canvas_w_;
  int canvas_h_;
};

struct Stroke {
  std::vector<Point> points;
  std::size_t index = 0;        // ordinal in drawing order
  std::size_t first_point = 0;  // offset of points[0] in the owning sketch
  std::size_t length_points = 0;
  double length_px = 0.0;
};

enum class SketchFormat { Stroke5Json, Stroke3Ndjson };

// Parses one drawing. For NDJSON input the first non-blank line is used.
// Throws ParseError (with byte offset) or ValidationError.
VectorSketch parse_vector_sketch(std::string_view data, SketchFormat format);

// One drawing per non-blank line, plus the optional "word"/"label" field.
struct LabeledDrawing {
  VectorSketch sketch;
  std::string label;
};
std::vector<LabeledDrawing> parse_ndjson_drawings(std::string_view data);

// Canonical stroke-5 JSON. An End point is appended when the sketch has none.
std::string serialize_stroke5(const VectorSketch& sketch);

VectorSketch normalize(const VectorSketch& sketch, int target_w = kDefaultCanvas,
                       int target_h = kDefaultCanvas, double margin = kDefaultMargin);

// Strokes run from a pen-Down through the Up that closes them; the End
// marker belongs to no stroke. A lone point between two Up points is a
// one-point stroke.
std::vector<Stroke> split_strokes(const VectorSketch& sketch);

// Inverse of split_strokes: concatenates strokes in order, closing each with
// Up (the last one keeps its own final state) and appending `end_marker`
// when given.
VectorSketch merge_strokes(std::span<const Stroke> strokes, int canvas_w, int canvas_h,
                           std::optional<Point> end_marker = std::nullopt);

// Maps each drawable point to the index of its stroke.
std::vector<std::size_t> point_stroke_index(const VectorSketch& sketch);

std::string_view to_string(PenState pen) noexcept;

} // namespace strokescope
