#include "strokescope/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace strokescope {

using nlohmann::json;

namespace {

json index_array(const std::vector<std::size_t>& v) { return json(v); }

// Blue for negative, grey for zero, red for positive.
std::string diverging_colour(double s) {
  s = std::clamp(s, -1.0, 1.0);
  const double grey = 170.0;
  double r = grey, g = grey, b = grey;
  if (s > 0.0) {
    r = grey + s * (215.0 - grey);
    g = grey * (1.0 - s) + 40.0 * s;
    b = grey * (1.0 - s) + 40.0 * s;
  } else if (s < 0.0) {
    r = grey * (1.0 + s) + 40.0 * -s;
    g = grey * (1.0 + s) + 90.0 * -s;
    b = grey + -s * (210.0 - grey);
  }
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", static_cast<int>(std::lround(r)), static_cast<int>(std::lround(g)),
                static_cast<int>(std::lround(b)));
  return buf;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

double peak_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::fabs(x));
  return m;
}

} // namespace

json corr_json(const CorrReport& corr) {
  return {{"corr", std::isnan(corr.corr) ? json(nullptr) : json(corr.corr)},
          {"reliable", to_string(corr.reliable)},
          {"n_strokes", corr.n_strokes}};
}

json sketch_json(const VectorSketch& sketch) { return json::parse(serialize_stroke5(sketch)); }

json attribution_json(const AttributionResult& result, const VectorSketch& sketch,
                      const std::optional<CorrReport>& corr) {
  json j = {{"granularity", to_string(result.granularity)},
            {"scores", result.scores},
            {"ranking", index_array(result.ranking)},
            {"target_value", result.target_value},
            {"canvas", {sketch.canvas_w(), sketch.canvas_h()}},
            {"warnings", result.warnings}};
  if (result.granularity == Granularity::Point) {
    json g = json::array();
    for (const Vec2& v : result.point_gradients) g.push_back({v.x, v.y});
    j["point_gradients"] = std::move(g);
    j["stroke_scores"] = stroke_order_from_points(result, sketch);
  }
  if (corr) j["corr"] = corr_json(*corr);
  return j;
}

json filter_json(const FilterReport& report) {
  return {{"kept", index_array(report.kept)},
          {"removed", index_array(report.removed)},
          {"normalized", report.normalized},
          {"scores", report.attribution.scores},
          {"sketch", sketch_json(report.filtered)}};
}

json attack_json(const AttackOutcome& outcome, AttackMode mode, int epsilon) {
  return {{"mode", to_string(mode)},
          {"epsilon", epsilon},
          {"removed", index_array(outcome.removed)},
          {"pred_before", outcome.pred_before},
          {"pred_after", outcome.pred_after},
          {"loss_before", outcome.loss_before},
          {"loss_after", outcome.loss_after},
          {"success", outcome.success},
          {"sketch", sketch_json(outcome.adversarial)}};
}

json reliability_json(const ReliabilityReport& report) {
  json j = {{"corr", corr_json(report.corr)},
            {"retrieved", report.retrieved},
            {"similarities", report.similarities},
            {"stroke_scores", report.stroke_scores},
            {"ranking", index_array(rank_descending(report.stroke_scores))}};
  j["true_rank"] = report.true_rank ? json(*report.true_rank) : json(nullptr);
  return j;
}

std::string overlay_svg(const VectorSketch& sketch, const AttributionResult& result) {
  const auto strokes = split_strokes(sketch);
  std::vector<double> stroke_scores =
      result.granularity == Granularity::Stroke ? result.scores : stroke_order_from_points(result, sketch);
  const double stroke_peak = peak_abs(stroke_scores);
  const double w = sketch.canvas_w(), h = sketch.canvas_h();
  const double line = std::max(1.0, std::min(w, h) / 128.0);

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << sketch.canvas_w() << "\" height=\""
     << sketch.canvas_h() << "\" viewBox=\"0 0 " << sketch.canvas_w() << ' ' << sketch.canvas_h() << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
  for (const Stroke& s : strokes) {
    const double v = stroke_peak > 0.0 ? stroke_scores[s.index] / stroke_peak : 0.0;
    const std::string colour = diverging_colour(v);
    os << "<g data-stroke=\"" << s.index << "\" data-score=\"" << stroke_scores[s.index] << "\">";
    if (s.points.size() == 1) {
      os << "<circle cx=\"" << num(s.points[0].x) << "\" cy=\"" << num(s.points[0].y) << "\" r=\"" << num(line)
         << "\" fill=\"" << colour << "\"/>";
    } else {
      os << "<polyline fill=\"none\" stroke-linecap=\"round\" stroke-linejoin=\"round\" stroke=\"" << colour
         << "\" stroke-width=\"" << num(line) << "\" points=\"";
      for (std::size_t i = 0; i < s.points.size(); ++i)
        os << (i ? " " : "") << num(s.points[i].x) << ',' << num(s.points[i].y);
      os << "\"/>";
    }
    os << "</g>\n";
  }
  if (result.granularity == Granularity::Point) {
    const double point_peak = peak_abs(result.scores);
    for (std::size_t t = 0; t < sketch.drawable_point_count(); ++t) {
      const double v = point_peak > 0.0 ? result.scores[t] / point_peak : 0.0;
      os << "<circle data-point=\"" << t << "\" cx=\"" << num(sketch[t].x) << "\" cy=\"" << num(sketch[t].y)
         << "\" r=\"" << num(line * (1.0 + 1.5 * v)) << "\" fill=\"" << diverging_colour(v) << "\"/>\n";
    }
  }
  os << "</svg>\n";
  return os.str();
}

Bytes heatmap_png(const Grid& pixel_grad) {
  return encode_png_rgb(pixel_grad.w(), pixel_grad.h(), heatmap_rgb(pixel_grad));
}

} // namespace strokescope
