#include "strokescope/attribution.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "strokescope/errors.hpp"

namespace strokescope {

std::string_view to_string(Granularity g) noexcept { return g == Granularity::Stroke ? "stroke" : "point"; }

std::string_view to_string(Reliability r) noexcept {
  switch (r) {
  case Reliability::High: return "high";
  case Reliability::Mid: return "mid";
  case Reliability::Low: return "low";
  case Reliability::NotApplicable: return "not_applicable";
  }
  return "?";
}

std::vector<std::size_t> rank_descending(std::span<const double> values) {
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
  return idx;
}

AttributionResult sla(const Scorer& scorer, const ScoreTarget& target, const VectorSketch& sketch,
                      const SlaOptions& options) {
  AttributionResult r;
  r.granularity = Granularity::Stroke;
  StrokeLayers layers = stroke_layers(sketch, &r.warnings);
  const RasterImage image = compose(layers.images, layers.weights);
  auto sg = score_and_gradient(scorer, image, target);
  r.target_value = sg.value;
  r.pixel_grad = std::move(sg.gradient);

  // Unclamped composition: the clamp is flat where it exceeds 1.
  std::vector<double> total(image.size(), 0.0);
  for (std::size_t k = 0; k < layers.images.size(); ++k)
    for (std::size_t p = 0; p < total.size(); ++p) total[p] += layers.weights[k].mask[p] * layers.images[k][p];

  r.scores.assign(layers.strokes.size(), 0.0);
  for (std::size_t k = 0; k < layers.strokes.size(); ++k) {
    double acc = 0.0;
    for (std::size_t p = 0; p < total.size(); ++p) {
      if (total[p] > 1.0) continue;
      if (options.use_weight_maps && !layers.weights[k].mask[p]) continue;
      acc += options.absolute ? std::abs(r.pixel_grad[p]) : r.pixel_grad[p];
    }
    r.scores[k] = acc;
  }
  r.ranking = rank_descending(r.scores);
  return r;
}

AttributionResult psla(const Scorer& scorer, const ScoreTarget& target, const VectorSketch& sketch,
                       const RenderParams& params) {
  AttributionResult r;
  r.granularity = Granularity::Point;
  const RasterImage image = soft_render(sketch, params);
  auto sg = score_and_gradient(scorer, image, target);
  r.target_value = sg.value;
  r.pixel_grad = std::move(sg.gradient);
  r.point_gradients = render_gradient(sketch, params, r.pixel_grad);
  r.scores.reserve(r.point_gradients.size());
  for (const Vec2& g : r.point_gradients) r.scores.push_back(std::hypot(g.x, g.y));
  r.ranking = rank_descending(r.scores);
  return r;
}

std::vector<double> stroke_order_from_points(const AttributionResult& point_result, const VectorSketch& sketch) {
  if (point_result.granularity != Granularity::Point)
    throw ValidationError("stroke_order_from_points needs a point-level attribution");
  if (point_result.scores.size() != sketch.size())
    throw ValidationError("point attribution has " + std::to_string(point_result.scores.size()) +
                          " scores, sketch has " + std::to_string(sketch.size()) + " points");
  std::vector<double> out;
  for (const Stroke& s : split_strokes(sketch)) {
    double acc = 0.0;
    for (std::size_t i = 0; i < s.length_points; ++i) acc += point_result.scores[s.first_point + i];
    out.push_back(acc / static_cast<double>(s.length_points));
  }
  return out;
}

Reliability classify_corr(double corr) noexcept {
  if (std::isnan(corr)) return Reliability::NotApplicable;
  if (corr >= kHighCorr) return Reliability::High;
  if (corr <= kLowCorr) return Reliability::Low;
  return Reliability::Mid;
}

namespace {

// Attribution rank (0-based) of each stroke.
std::vector<std::size_t> positions(std::span<const std::size_t> ranking) {
  const std::size_t n = ranking.size();
  std::vector<std::size_t> pos(n, n);
  for (std::size_t r = 0; r < n; ++r) {
    if (ranking[r] >= n || pos[ranking[r]] != n) throw ValidationError("ranking is not a permutation of the strokes");
    pos[ranking[r]] = r;
  }
  return pos;
}

} // namespace

double spearman_rho(std::span<const std::size_t> ranking) {
  const auto pos = positions(ranking);
  const double n = static_cast<double>(pos.size());
  if (pos.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  double d2 = 0.0;
  for (std::size_t i = 0; i < pos.size(); ++i) {
    const double d = static_cast<double>(pos[i]) - static_cast<double>(i);
    d2 += d * d;
  }
  return 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
}

double kendall_tau(std::span<const std::size_t> ranking) {
  const auto pos = positions(ranking);
  const std::size_t n = pos.size();
  if (n < 2) return std::numeric_limits<double>::quiet_NaN();
  long long s = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) s += pos[i] < pos[j] ? 1 : -1;
  return static_cast<double>(s) / (static_cast<double>(n) * static_cast<double>(n - 1) / 2.0);
}

CorrReport temporal_correlation(std::span<const std::size_t> ranking, const VectorSketch& sketch,
                                CorrMeasure measure) {
  const std::size_t m = split_strokes(sketch).size();
  if (ranking.size() != m)
    throw ValidationError("ranking covers " + std::to_string(ranking.size()) + " strokes, sketch has " +
                          std::to_string(m));
  CorrReport r;
  r.n_strokes = m;
  r.corr = measure == CorrMeasure::Spearman ? spearman_rho(ranking) : kendall_tau(ranking);
  r.reliable = classify_corr(r.corr);
  return r;
}

} // namespace strokescope
