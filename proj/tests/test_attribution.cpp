#include <doctest.h>

#include <cmath>
#include <map>
#include <random>

#include "strokescope/attribution.hpp"
#include "strokescope/errors.hpp"
#include "support.hpp"

using namespace strokescope;

namespace {

// Expected SLA scores for a linear logit: the class weights summed over each
// stroke's trace, skipping pixels covered by more than one stroke.
std::vector<double> linear_sla_oracle(const Scorer& lin, int cls, const VectorSketch& s) {
  const int w = s.canvas_w(), h = s.canvas_h();
  const auto strokes = split_strokes(s);
  std::map<std::pair<int, int>, int> cover;
  std::vector<std::vector<Pixel>> traces;
  for (const auto& st : strokes) {
    traces.push_back(stroke_trace(st, w, h));
    for (const auto& p : traces.back()) ++cover[{p.x, p.y}];
  }
  const auto& weights = lin.tensors()[0].data;
  std::vector<double> out;
  for (const auto& tr : traces) {
    double acc = 0.0;
    for (const auto& p : tr)
      if (cover[{p.x, p.y}] == 1) acc += weights[static_cast<std::size_t>(cls) * w * h + p.y * w + p.x];
    out.push_back(acc);
  }
  return out;
}

} // namespace

TEST_CASE("SLA with a linear scorer sums weights over exclusive stroke pixels") {
  std::mt19937_64 rng(30);
  const auto lin = testing::random_linear(24, 24, 3, 9);
  for (int i = 0; i < 30; ++i) {
    const auto s = testing::random_sketch(rng, 24, 24, 12);
    const auto r = sla(lin, ScoreTarget::class_logit(1), s);
    const auto expect = linear_sla_oracle(lin, 1, s);
    REQUIRE(r.scores.size() == expect.size());
    for (std::size_t k = 0; k < expect.size(); ++k) CHECK(r.scores[k] == doctest::Approx(expect[k]).epsilon(1e-12));
  }
}

TEST_CASE("SLA scores add up to the gradient over singly covered ink") {
  std::mt19937_64 rng(31);
  const auto conv = Scorer::tiny_conv_classifier(24, 24, 3, 4);
  for (int i = 0; i < 20; ++i) {
    const auto s = testing::random_sketch(rng, 24, 24, 12);
    const auto r = sla(conv, ScoreTarget::class_loss(0), s);
    const auto layers = stroke_layers(s);
    double expect = 0.0;
    for (std::size_t p = 0; p < r.pixel_grad.size(); ++p) {
      int cover = 0;
      for (const auto& wm : layers.weights) cover += wm.mask[p];
      if (cover == 1) expect += r.pixel_grad[p];
    }
    double total = 0.0;
    for (double v : r.scores) total += v;
    CHECK(total == doctest::Approx(expect).epsilon(1e-9));
  }
}

TEST_CASE("without weight maps every stroke gets the same score") {
  std::mt19937_64 rng(32);
  const auto conv = Scorer::tiny_conv_classifier(24, 24, 3, 5);
  for (int i = 0; i < 10; ++i) {
    const auto s = testing::random_sketch(rng, 24, 24, 12);
    SlaOptions opt;
    opt.use_weight_maps = false;
    const auto r = sla(conv, ScoreTarget::class_logit(2), s, opt);
    for (double v : r.scores) CHECK(v == r.scores.front());
  }
}

TEST_CASE("weight maps separate disjoint strokes with different gradient mass") {
  std::vector<double> w(2 * 16 * 16, 0.0);
  for (int x = 0; x < 16; ++x) w[2 * 16 + x] = 1.0;   // row 2 weighs 1
  for (int x = 0; x < 16; ++x) w[10 * 16 + x] = 3.0;  // row 10 weighs 3
  const auto lin = Scorer::linear(16, 16, w, std::vector<double>(2, 0.0));
  const VectorSketch s({{1, 2, PenState::Down}, {8, 2, PenState::Up}, {1, 10, PenState::Down}, {8, 10, PenState::Up},
                        {8, 10, PenState::End}},
                       16, 16);
  const auto r = sla(lin, ScoreTarget::class_logit(0), s);
  REQUIRE(r.scores.size() == 2);
  CHECK(r.scores[0] == doctest::Approx(8.0));
  CHECK(r.scores[1] == doctest::Approx(24.0));
  CHECK(r.ranking == std::vector<std::size_t>{1, 0});

  SlaOptions flat;
  flat.use_weight_maps = false;
  const auto d = sla(lin, ScoreTarget::class_logit(0), s, flat);
  CHECK(d.scores[0] == d.scores[1]);
}

TEST_CASE("SLA is local and linear in the scorer weights") {
  std::mt19937_64 rng(33);
  const auto s = testing::random_sketch(rng, 20, 20, 10);
  auto weights = testing::random_linear(20, 20, 2, 3).tensors()[0].data;
  const std::vector<double> bias{0.0, 0.0};
  const auto base = sla(Scorer::linear(20, 20, weights, bias), ScoreTarget::class_logit(0), s);

  auto doubled = weights;
  for (double& v : doubled) v *= 2.0;
  const auto twice = sla(Scorer::linear(20, 20, doubled, bias), ScoreTarget::class_logit(0), s);
  for (std::size_t k = 0; k < base.scores.size(); ++k) CHECK(twice.scores[k] == doctest::Approx(2.0 * base.scores[k]));

  // Moving weight off every stroke's trace changes nothing.
  const auto ink = rasterise(s);
  auto moved = weights;
  for (int y = 0; y < 20; ++y)
    for (int x = 0; x < 20; ++x)
      if (ink(x, y) == 0.0) moved[y * 20 + x] += 5.0;
  const auto local = sla(Scorer::linear(20, 20, moved, bias), ScoreTarget::class_logit(0), s);
  for (std::size_t k = 0; k < base.scores.size(); ++k) CHECK(local.scores[k] == doctest::Approx(base.scores[k]));
}

TEST_CASE("absolute SLA sums gradient magnitudes") {
  std::vector<double> w(16 * 16, 0.0);
  w[3 * 16 + 2] = -2.0;
  w[3 * 16 + 4] = 1.0;
  const auto lin = Scorer::linear(16, 16, w, {0.0});
  const VectorSketch s({{1, 3, PenState::Down}, {6, 3, PenState::Up}}, 16, 16);
  SlaOptions opt;
  CHECK(sla(lin, ScoreTarget::class_logit(0), s, opt).scores[0] == doctest::Approx(-1.0));
  opt.absolute = true;
  CHECK(sla(lin, ScoreTarget::class_logit(0), s, opt).scores[0] == doctest::Approx(3.0));
}

TEST_CASE("P-SLA point gradients match finite differences") {
  std::mt19937_64 rng(34);
  const RenderParams params;
  const auto conv = Scorer::tiny_conv_classifier(20, 20, 3, 8);
  const auto emb = Scorer::embedding(20, 20, 6, 9);
  const auto ref = embed(emb, rasterise(testing::random_sketch(rng, 20, 20, 8)));
  const auto lin = testing::random_linear(20, 20, 2, 10);
  const std::vector<std::pair<const Scorer*, ScoreTarget>> cases{
      {&lin, ScoreTarget::class_logit(1)}, {&conv, ScoreTarget::class_loss(0)}, {&emb, ScoreTarget::cosine(ref)}};
  const double h = 1e-6;
  for (const auto& [scorer, target] : cases) {
    for (int i = 0; i < 4; ++i) {
      const auto s = testing::random_sketch(rng, 20, 20, 8);
      const auto r = psla(*scorer, target, s, params);
      REQUIRE(r.point_gradients.size() == s.size());
      REQUIRE(r.scores.size() == s.size());
      auto f = [&](const VectorSketch& sk) { return score(*scorer, soft_render(sk, params), target); };
      for (std::size_t t = 0; t < s.size(); ++t) {
        const double gx = (f(testing::with_point(s, t, h, 0)) - f(testing::with_point(s, t, -h, 0))) / (2 * h);
        const double gy = (f(testing::with_point(s, t, 0, h)) - f(testing::with_point(s, t, 0, -h))) / (2 * h);
        CHECK(testing::close(r.point_gradients[t].x, gx, 1e-3, 1e-6));
        CHECK(testing::close(r.point_gradients[t].y, gy, 1e-3, 1e-6));
        CHECK(r.scores[t] == doctest::Approx(std::hypot(r.point_gradients[t].x, r.point_gradients[t].y)));
      }
    }
  }
}

TEST_CASE("stroke scores from point scores are per-stroke means") {
  const VectorSketch s({{0, 0, PenState::Down}, {4, 0, PenState::Up}, {0, 4, PenState::Down}, {2, 4, PenState::Down},
                        {4, 4, PenState::End}},
                       8, 8);
  AttributionResult r;
  r.granularity = Granularity::Point;
  r.scores = {1.0, 3.0, 2.0, 4.0, 0.0};
  const auto out = stroke_order_from_points(r, s);
  REQUIRE(out.size() == 2);
  CHECK(out[0] == 2.0);
  CHECK(out[1] == 3.0);

  r.scores.pop_back();
  CHECK_THROWS_AS(stroke_order_from_points(r, s), ValidationError);
  r.granularity = Granularity::Stroke;
  CHECK_THROWS_AS(stroke_order_from_points(r, s), ValidationError);
}

TEST_CASE("ranking is descending with ties broken by index") {
  const std::vector<double> v{0.2, 0.9, 0.2, -1.0, 0.9};
  CHECK(rank_descending(v) == std::vector<std::size_t>{1, 4, 0, 2, 3});
}

TEST_CASE("rank correlations against drawing order") {
  const std::vector<std::size_t> one_swap_pair{1, 0, 3, 2, 4};
  CHECK(spearman_rho(one_swap_pair) == doctest::Approx(0.8));
  CHECK(kendall_tau(one_swap_pair) == doctest::Approx(0.6));

  const std::vector<std::size_t> identity{0, 1, 2, 3};
  CHECK(spearman_rho(identity) == 1.0);
  CHECK(kendall_tau(identity) == 1.0);
  const std::vector<std::size_t> reversed{3, 2, 1, 0};
  CHECK(spearman_rho(reversed) == -1.0);
  CHECK(kendall_tau(reversed) == -1.0);

  const std::vector<std::size_t> single{0};
  CHECK(std::isnan(spearman_rho(single)));
  const std::vector<std::size_t> broken{0, 0, 1};
  CHECK_THROWS_AS(spearman_rho(broken), ValidationError);
}

TEST_CASE("reliability bands") {
  CHECK(classify_corr(0.5) == Reliability::High);
  CHECK(classify_corr(0.49) == Reliability::Mid);
  CHECK(classify_corr(0.1) == Reliability::Low);
  CHECK(classify_corr(-0.7) == Reliability::Low);
  CHECK(classify_corr(std::nan("")) == Reliability::NotApplicable);

  const VectorSketch three({{0, 0, PenState::Down}, {1, 0, PenState::Up}, {0, 2, PenState::Down}, {1, 2, PenState::Up},
                            {0, 4, PenState::Down}, {1, 4, PenState::End}},
                           8, 8);
  const std::vector<std::size_t> same{0, 1, 2};
  const auto rep = temporal_correlation(same, three);
  CHECK(rep.corr == 1.0);
  CHECK(rep.reliable == Reliability::High);
  CHECK(rep.n_strokes == 3);
  const VectorSketch one({{0, 0, PenState::Down}, {3, 3, PenState::Up}}, 8, 8);
  const std::vector<std::size_t> only{0};
  CHECK(temporal_correlation(only, one).reliable == Reliability::NotApplicable);
}
