#include "strokescope/applications.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include <json.hpp>

#include "strokescope/errors.hpp"

namespace strokescope {

namespace {

constexpr double kThresholdSlack = 1e-12;

void require_embedding(const Scorer& s) {
  if (s.kind() != ScorerKind::Embedding) throw ScorerError("filtering needs an embedding scorer");
}

void require_classifier(const Scorer& s) {
  if (s.kind() == ScorerKind::Embedding) throw ScorerError("attacks need a classifier scorer");
}

std::optional<Point> end_marker(const VectorSketch& s) {
  if (!s.has_end()) return std::nullopt;
  return s.points().back();
}

bool has_drawn_segment(const VectorSketch& s) {
  for (std::size_t t = 1; t < s.size(); ++t)
    if (s.segment_drawn(t)) return true;
  return false;
}

double class_loss(const Scorer& classifier, const RasterImage& image, int cls) {
  return score(classifier, image, ScoreTarget::class_loss(cls));
}

// Binary Gumbel-softmax decision on the keep probability s + delta.
bool gumbel_keep(double normalized, double delta, double temperature, std::mt19937_64& rng) {
  const double p = std::clamp(normalized + delta, 1e-12, 1.0 - 1e-12);
  std::uniform_real_distribution<double> u(std::numeric_limits<double>::min(), 1.0);
  const double g_keep = -std::log(-std::log(u(rng)));
  const double g_drop = -std::log(-std::log(u(rng)));
  const double z = ((std::log(1.0 - p) + g_drop) - (std::log(p) + g_keep)) / temperature;
  return 1.0 / (1.0 + std::exp(z)) >= 0.5;
}

} // namespace

void FilterConfig::validate() const {
  if (!(delta >= 0.0 && delta < 0.5)) throw ValidationError("filter delta must lie in [0, 0.5)");
  if (!(gumbel_temperature > 0.0)) throw ValidationError("gumbel temperature must be positive");
  render.validate();
}

std::vector<double> normalize_scores(std::span<const double> scores) {
  std::vector<double> out(scores.size());
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) total += out[i] = std::max(0.0, scores[i]);
  if (total <= 0.0) {
    std::fill(out.begin(), out.end(), scores.empty() ? 0.0 : 1.0 / static_cast<double>(scores.size()));
    return out;
  }
  for (double& v : out) v /= total;
  return out;
}

bool keep_by_threshold(double normalized, double delta) noexcept {
  return normalized + delta >= 0.5 - kThresholdSlack;
}

FilterReport filter_noisy_strokes(const VectorSketch& sketch, const Scorer& embedding_scorer,
                                  std::span<const double> reference, const FilterConfig& cfg) {
  require_embedding(embedding_scorer);
  cfg.validate();
  AttributionResult attr = sla(embedding_scorer, ScoreTarget::cosine({reference.begin(), reference.end()}), sketch);
  std::vector<double> norm = normalize_scores(attr.scores);
  std::mt19937_64 rng(cfg.seed);
  std::vector<bool> keep(norm.size());
  for (std::size_t i = 0; i < norm.size(); ++i)
    keep[i] = cfg.stochastic ? gumbel_keep(norm[i], cfg.delta, cfg.gumbel_temperature, rng)
                             : keep_by_threshold(norm[i], cfg.delta);
  keep[attr.ranking.front()] = true;

  const auto strokes = split_strokes(sketch);
  std::vector<Stroke> kept_strokes;
  std::vector<std::size_t> kept, removed;
  for (std::size_t i = 0; i < strokes.size(); ++i) {
    if (keep[i]) {
      kept.push_back(i);
      kept_strokes.push_back(strokes[i]);
    } else {
      removed.push_back(i);
    }
  }
  VectorSketch out = merge_strokes(kept_strokes, sketch.canvas_w(), sketch.canvas_h(), end_marker(sketch));
  return {std::move(out), std::move(kept), std::move(removed), std::move(norm), std::move(attr)};
}

FilterReport filter_noisy_points(const VectorSketch& sketch, const Scorer& embedding_scorer,
                                 std::span<const double> reference, const FilterConfig& cfg) {
  require_embedding(embedding_scorer);
  cfg.validate();
  AttributionResult attr =
      psla(embedding_scorer, ScoreTarget::cosine({reference.begin(), reference.end()}), sketch, cfg.render);
  const std::size_t n = sketch.drawable_point_count();
  double mx = 0.0;
  for (std::size_t t = 0; t < n; ++t) mx = std::max(mx, attr.scores[t]);
  std::vector<double> norm(n, 1.0);
  if (mx > 0.0)
    for (std::size_t t = 0; t < n; ++t) norm[t] = std::max(0.0, attr.scores[t]) / mx;

  std::mt19937_64 rng(cfg.seed);
  std::vector<Point> pts(sketch.points().begin(), sketch.points().end());
  std::vector<std::size_t> kept, removed;
  for (std::size_t t = 0; t < n; ++t) {
    const bool keep = cfg.stochastic ? gumbel_keep(norm[t], cfg.delta, cfg.gumbel_temperature, rng)
                                     : keep_by_threshold(norm[t], cfg.delta);
    if (!keep && t > 0 && pts[t - 1].pen == PenState::Down) {
      pts[t - 1].pen = PenState::Up;
      removed.push_back(t);
    } else {
      kept.push_back(t);
    }
  }
  const bool any_down = std::any_of(pts.begin(), pts.end(), [](const Point& p) { return p.pen == PenState::Down; });
  if (!any_down && !removed.empty()) {
    const auto best = std::max_element(removed.begin(), removed.end(),
                                       [&](std::size_t a, std::size_t b) { return norm[a] < norm[b]; });
    pts[*best - 1].pen = PenState::Down;
    kept.insert(std::upper_bound(kept.begin(), kept.end(), *best), *best);
    removed.erase(best);
  }
  VectorSketch out(std::move(pts), sketch.canvas_w(), sketch.canvas_h());
  return {std::move(out), std::move(kept), std::move(removed), std::move(norm), std::move(attr)};
}

std::string_view to_string(AttackMode m) noexcept {
  return m == AttackMode::SlaRemoveStroke ? "sla" : "psla";
}

void AttackConfig::validate() const {
  if (epsilon < 1) throw ValidationError("attack budget epsilon must be >= 1");
  render.validate();
}

VectorSketch remove_points(const VectorSketch& sketch, std::span<const std::size_t> indices) {
  const std::size_t n = sketch.drawable_point_count();
  std::vector<bool> drop(sketch.size(), false);
  for (std::size_t i : indices) {
    if (i >= n) throw ValidationError("point " + std::to_string(i) + " is not a removable point");
    drop[i] = true;
  }
  std::vector<Point> out;
  for (std::size_t i = 0; i < sketch.size(); ++i) {
    if (drop[i]) {
      if (!out.empty() && out.back().pen == PenState::Down) out.back().pen = PenState::Up;
      continue;
    }
    out.push_back(sketch[i]);
  }
  return VectorSketch(std::move(out), sketch.canvas_w(), sketch.canvas_h());
}

VectorSketch remove_stroke(const VectorSketch& sketch, std::size_t stroke) {
  auto strokes = split_strokes(sketch);
  if (stroke >= strokes.size()) throw ValidationError("stroke index out of range");
  if (strokes.size() == 1) throw ValidationError("cannot remove the only stroke");
  strokes.erase(strokes.begin() + static_cast<std::ptrdiff_t>(stroke));
  return merge_strokes(strokes, sketch.canvas_w(), sketch.canvas_h(), end_marker(sketch));
}

std::vector<std::size_t> top_k_indices(std::span<const double> values, std::size_t k) {
  auto order = rank_descending(values);
  order.resize(std::min(k, order.size()));
  std::sort(order.begin(), order.end());
  return order;
}

RasterImage render_for(AttackMode mode, const VectorSketch& sketch, const RenderParams& params) {
  return mode == AttackMode::SlaRemoveStroke ? rasterise(sketch) : soft_render(sketch, params);
}

AttackOutcome sla_attack(const Scorer& classifier, const VectorSketch& sketch, const AttackConfig& cfg) {
  require_classifier(classifier);
  cfg.validate();
  const auto strokes = split_strokes(sketch);
  if (strokes.size() < 2) throw ValidationError("stroke removal needs a sketch with at least two strokes");

  const RasterImage clean = rasterise(sketch);
  const int pred_before = predict_class(classifier, clean);
  const int cls = cfg.true_class.value_or(pred_before);
  std::optional<std::size_t> best;
  double best_loss = -std::numeric_limits<double>::infinity();
  std::optional<VectorSketch> best_sketch;
  for (const Stroke& s : strokes) {
    if (s.length_points > static_cast<std::size_t>(cfg.epsilon)) continue;
    std::optional<VectorSketch> candidate;
    try {
      candidate.emplace(remove_stroke(sketch, s.index));
    } catch (const ValidationError&) {
      continue;
    }
    const double loss = class_loss(classifier, rasterise(*candidate), cls);
    if (!best || loss > best_loss) {
      best = s.index;
      best_loss = loss;
      best_sketch = std::move(candidate);
    }
  }
  if (!best) throw NoCandidateError("no stroke has at most " + std::to_string(cfg.epsilon) + " points");

  AttackOutcome out{*std::move(best_sketch), {*best}, pred_before, -1, class_loss(classifier, clean, cls), best_loss,
                    false};
  out.pred_after = predict_class(classifier, rasterise(out.adversarial));
  out.success = out.pred_after != out.pred_before;
  return out;
}

AttackOutcome psla_attack(const Scorer& classifier, const VectorSketch& sketch, const AttackConfig& cfg) {
  require_classifier(classifier);
  cfg.validate();
  const std::size_t n = sketch.drawable_point_count();
  if (n <= static_cast<std::size_t>(cfg.epsilon))
    throw BudgetError("sketch has " + std::to_string(n) + " points, budget " + std::to_string(cfg.epsilon) +
                      " would remove all of them");

  const RasterImage clean = soft_render(sketch, cfg.render);
  const int pred_before = predict_class(classifier, clean);
  const int cls = cfg.true_class.value_or(pred_before);

  std::vector<double> impact(n, -std::numeric_limits<double>::infinity());
  if (cfg.gradient_fast_path) {
    const auto attr = psla(classifier, ScoreTarget::class_loss(cls), sketch, cfg.render);
    std::copy_n(attr.scores.begin(), n, impact.begin());
  } else {
    for (std::size_t t = 0; t < n; ++t) {
      const std::size_t idx[1] = {t};
      try {
        impact[t] = class_loss(classifier, soft_render(remove_points(sketch, idx), cfg.render), cls);
      } catch (const ValidationError&) {
      }
    }
  }
  auto removed = top_k_indices(impact, static_cast<std::size_t>(cfg.epsilon));
  std::optional<VectorSketch> adv;
  try {
    adv.emplace(remove_points(sketch, removed));
  } catch (const ValidationError&) {
  }
  if (!adv || !has_drawn_segment(*adv))
    throw BudgetError("removing " + std::to_string(cfg.epsilon) + " points would leave no drawable segment");

  const RasterImage attacked = soft_render(*adv, cfg.render);
  AttackOutcome out{*std::move(adv), std::move(removed), pred_before, predict_class(classifier, attacked),
                    class_loss(classifier, clean, cls), class_loss(classifier, attacked, cls), false};
  out.success = out.pred_after != out.pred_before;
  return out;
}

AttackOutcome run_attack(const Scorer& classifier, const VectorSketch& sketch, const AttackConfig& cfg) {
  return cfg.mode == AttackMode::SlaRemoveStroke ? sla_attack(classifier, sketch, cfg)
                                                 : psla_attack(classifier, sketch, cfg);
}

BenchmarkResult attack_benchmark(const Scorer& classifier, std::span<const LabeledSketch> sketches,
                                 std::span<const int> epsilons, std::span<const AttackMode> modes) {
  BenchmarkResult result;
  for (AttackMode mode : modes) {
    std::vector<int> before(sketches.size());
    for (std::size_t i = 0; i < sketches.size(); ++i)
      before[i] = predict_class(classifier, render_for(mode, sketches[i].sketch));
    for (int eps : epsilons) {
      BenchmarkCell cell{mode, eps, sketches.size(), 0, 0.0, 0.0};
      for (std::size_t i = 0; i < sketches.size(); ++i) {
        BenchmarkRow row{i, sketches[i].label, mode, eps, before[i], before[i], false, {}};
        AttackConfig cfg;
        cfg.epsilon = eps;
        cfg.mode = mode;
        cfg.true_class = sketches[i].label;
        try {
          const AttackOutcome o = run_attack(classifier, sketches[i].sketch, cfg);
          row.pred_after = o.pred_after;
          row.removed = o.removed;
          row.attacked = true;
        } catch (const NoCandidateError&) {
        } catch (const BudgetError&) {
        } catch (const ValidationError&) {
        }
        cell.attacked += row.attacked;
        cell.accuracy_before += row.pred_before == row.label;
        cell.accuracy_after += row.pred_after == row.label;
        result.rows.push_back(std::move(row));
      }
      if (cell.n > 0) {
        cell.accuracy_before /= static_cast<double>(cell.n);
        cell.accuracy_after /= static_cast<double>(cell.n);
      }
      result.cells.push_back(cell);
    }
  }
  return result;
}

std::string benchmark_csv(const BenchmarkResult& result) {
  std::ostringstream os;
  os << "sketch,label,mode,epsilon,pred_before,pred_after,attacked,removed\n";
  for (const auto& r : result.rows) {
    os << r.sketch << ',' << r.label << ',' << to_string(r.mode) << ',' << r.epsilon << ',' << r.pred_before << ','
       << r.pred_after << ',' << (r.attacked ? 1 : 0) << ',';
    for (std::size_t k = 0; k < r.removed.size(); ++k) os << (k ? " " : "") << r.removed[k];
    os << '\n';
  }
  return os.str();
}

std::string benchmark_summary_json(const BenchmarkResult& result) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : result.cells)
    cells.push_back({{"mode", to_string(c.mode)},
                     {"epsilon", c.epsilon},
                     {"n", c.n},
                     {"attacked", c.attacked},
                     {"accuracy_before", c.accuracy_before},
                     {"accuracy_after", c.accuracy_after},
                     {"drop", c.drop()}});
  return nlohmann::json{{"cells", cells}}.dump(2);
}

ReliabilityReport retrieval_reliability(const VectorSketch& sketch, const Scorer& embedding_scorer,
                                        std::span<const std::vector<double>> gallery,
                                        std::optional<std::size_t> true_index, const ReliabilityConfig& cfg) {
  if (embedding_scorer.kind() != ScorerKind::Embedding) throw ScorerError("reliability needs an embedding scorer");
  if (gallery.empty()) throw ValidationError("gallery is empty");
  if (true_index && *true_index >= gallery.size()) throw ValidationError("true match index outside the gallery");
  ReliabilityReport r;
  const auto query = embed(embedding_scorer, rasterise(sketch));
  for (const auto& g : gallery) {
    if (g.size() != query.size()) throw DimensionError("gallery embedding size does not match the scorer");
    r.similarities.push_back(cosine_similarity(query, g));
  }
  const auto order = rank_descending(r.similarities);
  r.retrieved = order.front();
  if (true_index)
    r.true_rank = static_cast<std::size_t>(std::find(order.begin(), order.end(), *true_index) - order.begin()) + 1;

  const ScoreTarget target = ScoreTarget::cosine(gallery[r.retrieved]);
  std::vector<std::size_t> ranking;
  if (cfg.granularity == Granularity::Stroke) {
    r.attribution = sla(embedding_scorer, target, sketch);
    r.stroke_scores = r.attribution.scores;
  } else {
    r.attribution = psla(embedding_scorer, target, sketch, cfg.render);
    r.stroke_scores = stroke_order_from_points(r.attribution, sketch);
  }
  r.corr = temporal_correlation(rank_descending(r.stroke_scores), sketch, cfg.measure);
  return r;
}

} // namespace strokescope
