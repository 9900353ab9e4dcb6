#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "strokescope/diffraster.hpp"
#include "strokescope/raster.hpp"
#include "strokescope/scorer.hpp"
#include "strokescope/sketch.hpp"

namespace strokescope {

enum class Granularity { Stroke, Point };

std::string_view to_string(Granularity g) noexcept;

struct AttributionResult {
  Granularity granularity = Granularity::Stroke;
  std::vector<double> scores;          // one per stroke, or one per point
  std::vector<Vec2> point_gradients;   // Point only: signed (d/dx, d/dy) per point
  std::vector<std::size_t> ranking;    // descending score, ties by ascending index
  Grid pixel_grad;                     // gradient of the target w.r.t. the rendered image
  double target_value = 0.0;           // scorer target on the rendered image
  std::vector<std::string> warnings;
};

struct SlaOptions {
  bool use_weight_maps = true;  // false: every stroke sees the whole canvas
  bool absolute = false;        // sum |pixel_grad| instead of the signed sum
};

// Stroke-level attribution. The sketch is rendered by composing its
// per-stroke rasters; stroke i receives the pixel gradient summed over its
// weight map. Pixels where the composition saturates (two or more strokes
// overlap) pass no gradient.
AttributionResult sla(const Scorer& scorer, const ScoreTarget& target, const VectorSketch& sketch,
                      const SlaOptions& options = {});

// Point-level attribution through the soft distance-field render. Scores are
// the L2 norm of each point's coordinate gradient; the End marker scores 0.
AttributionResult psla(const Scorer& scorer, const ScoreTarget& target, const VectorSketch& sketch,
                       const RenderParams& params = {});

// Indices sorted by descending value, ties by ascending index.
std::vector<std::size_t> rank_descending(std::span<const double> values);

// Mean point score of each stroke. Throws ValidationError for a stroke-level
// result or when the result does not match the sketch.
std::vector<double> stroke_order_from_points(const AttributionResult& point_result, const VectorSketch& sketch);

enum class Reliability { High, Mid, Low, NotApplicable };
enum class CorrMeasure { Spearman, Kendall };

std::string_view to_string(Reliability r) noexcept;

struct CorrReport {
  double corr = 0.0;  // NaN when not applicable
  Reliability reliable = Reliability::NotApplicable;
  std::size_t n_strokes = 0;
};

inline constexpr double kHighCorr = 0.5;
inline constexpr double kLowCorr = 0.1;

Reliability classify_corr(double corr) noexcept;

// Rank correlation between the attribution order (ranking[0] = most salient
// stroke) and the drawing order (stroke 0 drawn first). `ranking` must be a
// permutation of the sketch's stroke indices.
CorrReport temporal_correlation(std::span<const std::size_t> ranking, const VectorSketch& sketch,
                                CorrMeasure measure = CorrMeasure::Spearman);

double spearman_rho(std::span<const std::size_t> ranking);
double kendall_tau(std::span<const std::size_t> ranking);

} // namespace strokescope
