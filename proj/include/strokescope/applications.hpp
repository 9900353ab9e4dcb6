#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "strokescope/attribution.hpp"
#include "strokescope/corpus.hpp"

namespace strokescope {

struct FilterConfig {
  Granularity granularity = Granularity::Stroke;
  double delta = 0.3;
  double gumbel_temperature = 1.0;
  bool stochastic = false;
  std::uint64_t seed = 0;  // stochastic mode only
  RenderParams render;     // point filter only

  static FilterConfig strokes(double delta = 0.3) { return {Granularity::Stroke, delta, 1.0, false, 0, {}}; }
  static FilterConfig points(double delta = 0.1) { return {Granularity::Point, delta, 1.0, false, 0, {}}; }
  void validate() const;  // throws ValidationError
};

struct FilterReport {
  VectorSketch filtered;
  std::vector<std::size_t> kept;     // stroke indices, or point indices whose incoming segment survived
  std::vector<std::size_t> removed;  // stroke indices, or points whose incoming segment was cut
  std::vector<double> normalized;    // per-stroke or per-point normalised scores
  AttributionResult attribution;
};

// Floors negatives at 0 and divides by the sum (uniform when the sum is 0).
std::vector<double> normalize_scores(std::span<const double> scores);

// Hard keep rule: score + delta >= 0.5.
bool keep_by_threshold(double normalized, double delta) noexcept;

// Drops strokes whose cosine-similarity attribution is too small. The
// top-ranked stroke is always kept.
FilterReport filter_noisy_strokes(const VectorSketch& sketch, const Scorer& embedding_scorer,
                                  std::span<const double> reference, const FilterConfig& cfg);

// Cuts the segment into every point whose attribution is too small by
// lifting the pen at its predecessor. Point scores are normalised by their
// maximum. The End marker is never touched.
FilterReport filter_noisy_points(const VectorSketch& sketch, const Scorer& embedding_scorer,
                                 std::span<const double> reference, const FilterConfig& cfg);

enum class AttackMode { SlaRemoveStroke, PslaRemovePoints };

std::string_view to_string(AttackMode m) noexcept;

struct AttackConfig {
  int epsilon = 5;
  AttackMode mode = AttackMode::SlaRemoveStroke;
  std::optional<int> true_class;    // defaults to the prediction on the clean sketch
  bool gradient_fast_path = false;  // P-SLA: rank points by |gradient| instead of leave-one-out
  RenderParams render;

  void validate() const;
};

struct AttackOutcome {
  VectorSketch adversarial;
  std::vector<std::size_t> removed;  // stroke index (SLA) or point indices (P-SLA)
  int pred_before = -1;
  int pred_after = -1;
  double loss_before = 0.0;
  double loss_after = 0.0;
  bool success = false;
};

// Deletes the given points. A kept point whose successor was deleted while
// its pen was down gets its pen lifted, so no new segment is bridged.
VectorSketch remove_points(const VectorSketch& sketch, std::span<const std::size_t> indices);
VectorSketch remove_stroke(const VectorSketch& sketch, std::size_t stroke);

// Indices of the k largest values, ties by ascending index, returned sorted.
std::vector<std::size_t> top_k_indices(std::span<const double> values, std::size_t k);

// Removes the single stroke of at most epsilon points that maximises the
// cross-entropy of the Bresenham render.
AttackOutcome sla_attack(const Scorer& classifier, const VectorSketch& sketch, const AttackConfig& cfg);

// Removes the epsilon points with the largest leave-one-out cross-entropy of
// the soft render.
AttackOutcome psla_attack(const Scorer& classifier, const VectorSketch& sketch, const AttackConfig& cfg);

AttackOutcome run_attack(const Scorer& classifier, const VectorSketch& sketch, const AttackConfig& cfg);

// The renderer each attack mode is evaluated with.
RasterImage render_for(AttackMode mode, const VectorSketch& sketch, const RenderParams& params = {});

struct BenchmarkRow {
  std::size_t sketch = 0;
  int label = 0;
  AttackMode mode = AttackMode::SlaRemoveStroke;
  int epsilon = 0;
  int pred_before = -1;
  int pred_after = -1;
  bool attacked = false;  // false when no candidate fit the budget
  std::vector<std::size_t> removed;
};

struct BenchmarkCell {
  AttackMode mode = AttackMode::SlaRemoveStroke;
  int epsilon = 0;
  std::size_t n = 0;
  std::size_t attacked = 0;
  double accuracy_before = 0.0;
  double accuracy_after = 0.0;
  double drop() const noexcept { return accuracy_before - accuracy_after; }
};

struct BenchmarkResult {
  std::vector<BenchmarkRow> rows;
  std::vector<BenchmarkCell> cells;
};

BenchmarkResult attack_benchmark(const Scorer& classifier, std::span<const LabeledSketch> sketches,
                                 std::span<const int> epsilons, std::span<const AttackMode> modes);

std::string benchmark_csv(const BenchmarkResult& result);
std::string benchmark_summary_json(const BenchmarkResult& result);

struct ReliabilityConfig {
  Granularity granularity = Granularity::Stroke;
  CorrMeasure measure = CorrMeasure::Spearman;
  RenderParams render;
};

struct ReliabilityReport {
  CorrReport corr;
  std::size_t retrieved = 0;               // top-1 gallery index
  std::optional<std::size_t> true_rank;    // 1-based rank of the true match
  std::vector<double> similarities;
  std::vector<double> stroke_scores;
  AttributionResult attribution;
};

// Retrieves against the gallery by cosine similarity, attributes the sketch
// against its top-1 match and correlates that attribution with the drawing
// order.
ReliabilityReport retrieval_reliability(const VectorSketch& sketch, const Scorer& embedding_scorer,
                                        std::span<const std::vector<double>> gallery,
                                        std::optional<std::size_t> true_index = std::nullopt,
                                        const ReliabilityConfig& cfg = {});

} // namespace strokescope
