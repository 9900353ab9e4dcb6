#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "strokescope/raster.hpp"
#include "strokescope/scorer.hpp"
#include "strokescope/sketch.hpp"

namespace strokescope {

// Synthetic polyline shapes used to train and exercise the toy scorers.
enum class ShapeClass : int { Circle = 0, Square = 1, Triangle = 2 };
inline constexpr int kShapeClassCount = 3;

std::string_view to_string(ShapeClass c) noexcept;

struct ShapeConfig {
  int canvas = 48;
  double min_radius = 10.5;
  double max_radius = 17.25;
  double centre_jitter = 3.75;  // max offset of the shape centre from the canvas centre
  double point_jitter = 0.45;   // std-dev of per-point noise, px
  double min_step = 2.25;       // spacing between sampled points, px
  double max_step = 3.75;
  double lift_probability = 0.6;  // chance of lifting the pen at a corner
  bool short_piece = true;        // carve out one stroke of 3-5 points
  int strokes = 0;  // > 0: cut into exactly this many near-equal pieces instead

  // Defaults with every length scaled to an n x n canvas.
  static ShapeConfig for_canvas(int n);
};

struct ShapeSpec {
  ShapeClass cls = ShapeClass::Circle;
  double cx = 0.0;
  double cy = 0.0;
  double radius = 0.0;
  double theta = 0.0;
};

ShapeSpec random_shape_spec(std::mt19937_64& rng, const ShapeConfig& cfg, int cls = -1);

// Hand-drawn-looking rendition: jittered points split into strokes. With
// `short_piece` one stroke is at most 5 points long; without it a sketch has
// at most 4 strokes.
VectorSketch draw_shape(const ShapeSpec& spec, std::mt19937_64& rng, const ShapeConfig& cfg);

// Filled shape; stands in for the photo side of a sketch/photo pair. Being a
// different kind of image from the line sketch, it keeps the two domains apart
// the way photos and sketches are.
RasterImage shape_silhouette(const ShapeSpec& spec, int canvas);

// Short random scribble (2-5 points) placed outside the shape's disc when
// the canvas leaves room for it.
std::vector<Point> noise_stroke(std::mt19937_64& rng, const ShapeSpec& spec, int canvas);

struct NoisySketch {
  VectorSketch sketch;
  std::vector<std::size_t> noise_strokes;  // stroke indices of the injected scribbles
};

// Adds `count` scribbles. With `random_positions` they are interleaved at
// random places in the drawing order, otherwise appended.
NoisySketch inject_noise(const VectorSketch& clean, int count, const ShapeSpec& spec, std::mt19937_64& rng,
                         bool random_positions);

struct LabeledSketch {
  VectorSketch sketch;
  int label = 0;
};

// `per_class` sketches of each shape, shuffled deterministically.
std::vector<LabeledSketch> shapes_corpus(int per_class, std::uint64_t seed, const ShapeConfig& cfg = {});

// Bresenham raster of every sketch, plus the soft render when `with_soft` is
// set, so one classifier serves both attack modes.
std::vector<LabeledImage> training_images(const std::vector<LabeledSketch>& corpus, bool with_soft);

// Toy fine-grained retrieval data: each instance is a shape with its outline
// as the gallery image and a noisy multi-stroke sketch as the query.
struct RetrievalItem {
  int instance = 0;
  ShapeSpec spec;
  VectorSketch sketch;
  RasterImage photo;
  std::vector<std::size_t> noise_strokes;
  VectorSketch clean;  // `sketch` before the scribbles went in
};

std::vector<RetrievalItem> retrieval_corpus(int count, std::uint64_t seed, int max_noise, const ShapeConfig& cfg = {});

// One pair per clean sketch and one per noisy sketch. With `degraded`, the
// clean pair ranks its noisy version and a copy missing one stroke below it,
// and the noisy pair ranks a copy missing one clean stroke below it.
std::vector<EmbeddingPair> embedding_pairs(const std::vector<RetrievalItem>& items, bool degraded = true,
                                           std::uint64_t seed = 5);

// QuickDraw-style NDJSON with a "word"/"label" field. Sketches are
// normalised onto a canvas x canvas frame; labels are numbered in sorted
// order and returned in `class_names`.
std::vector<LabeledSketch> load_labeled_ndjson(const std::filesystem::path& path, int canvas,
                                               std::vector<std::string>* class_names = nullptr);

} // namespace strokescope
