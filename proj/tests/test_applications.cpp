#include <doctest.h>

#include <algorithm>
#include <random>

#include "strokescope/applications.hpp"
#include "strokescope/errors.hpp"
#include "support.hpp"

using namespace strokescope;

namespace {

// Two classes on 16x16. Class 1 only sees row 12, x in [2, 4]; class 0 is a
// constant 0.5. A short stroke on that row decides the prediction.
Scorer row_detector() {
  std::vector<double> w(2 * 16 * 16, 0.0);
  for (int x = 2; x <= 4; ++x) w[16 * 16 + 12 * 16 + x] = 1.0;
  return Scorer::linear(16, 16, w, {0.5, 0.0});
}

VectorSketch long_and_short() {
  std::vector<Point> pts;
  for (int x = 1; x <= 15; x += 2) pts.push_back({double(x), 2.0, PenState::Down});
  pts.back().pen = PenState::Up;
  pts.push_back({2, 12, PenState::Down});
  pts.push_back({4, 12, PenState::Up});
  pts.push_back({4, 12, PenState::End});
  return VectorSketch(std::move(pts), 16, 16);
}

} // namespace

TEST_CASE("keep rule arithmetic") {
  const std::vector<double> two{1.0, 1.0};
  const auto n2 = normalize_scores(two);
  CHECK(n2 == std::vector<double>{0.5, 0.5});
  CHECK(keep_by_threshold(n2[0], 0.3));

  const std::vector<double> ten(10, 3.0);
  for (double v : normalize_scores(ten)) CHECK(keep_by_threshold(v, 0.49));
  CHECK_FALSE(keep_by_threshold(0.1, 0.3));

  for (int m = 1; m <= 50; ++m) {
    const std::vector<double> uniform(m, 0.25);
    const double delta = 0.5 - 1.0 / m;
    for (double v : normalize_scores(uniform)) CHECK(keep_by_threshold(v, delta));
  }
}

TEST_CASE("normalisation floors negatives") {
  const std::vector<double> mixed{-2.0, 1.0, 3.0};
  CHECK(normalize_scores(mixed) == std::vector<double>{0.0, 0.25, 0.75});
  const std::vector<double> negative{-1.0, -4.0};
  CHECK(normalize_scores(negative) == std::vector<double>{0.5, 0.5});
}

TEST_CASE("filter configuration is validated") {
  auto cfg = FilterConfig::strokes();
  CHECK(cfg.delta == 0.3);
  CHECK(FilterConfig::points().delta == 0.1);
  cfg.delta = 0.5;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg.delta = -0.1;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = FilterConfig::strokes();
  cfg.gumbel_temperature = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);

  const auto lin = testing::random_linear(16, 16, 2, 1);
  const std::vector<double> ref{1.0, 0.0};
  CHECK_THROWS_AS(filter_noisy_strokes(long_and_short(), lin, ref, FilterConfig::strokes()), ScorerError);
  CHECK_THROWS_AS(filter_noisy_points(long_and_short(), lin, ref, FilterConfig::points()), ScorerError);
}

TEST_CASE("stroke filter output is a partition of the strokes") {
  std::mt19937_64 rng(40);
  const auto emb = Scorer::embedding(24, 24, 8, 2);
  for (int i = 0; i < 20; ++i) {
    const auto s = testing::random_sketch(rng, 24, 24, 12);
    const auto ref = embed(emb, rasterise(testing::random_sketch(rng, 24, 24, 12)));
    const auto rep = filter_noisy_strokes(s, emb, ref, FilterConfig::strokes(0.3));
    const auto strokes = split_strokes(s);
    CHECK(rep.kept.size() + rep.removed.size() == strokes.size());
    CHECK(std::find(rep.kept.begin(), rep.kept.end(), rep.attribution.ranking.front()) != rep.kept.end());
    CHECK(split_strokes(rep.filtered).size() == rep.kept.size());
    for (std::size_t k : rep.kept)
      CHECK((keep_by_threshold(rep.normalized[k], 0.3) || k == rep.attribution.ranking.front()));
    for (std::size_t k : rep.removed) CHECK_FALSE(keep_by_threshold(rep.normalized[k], 0.3));
    CHECK(parse_vector_sketch(serialize_stroke5(rep.filtered), SketchFormat::Stroke5Json) == rep.filtered);

    auto sto = FilterConfig::strokes(0.3);
    sto.stochastic = true;
    sto.seed = 17;
    const auto a = filter_noisy_strokes(s, emb, ref, sto);
    const auto b = filter_noisy_strokes(s, emb, ref, sto);
    CHECK(a.kept == b.kept);
  }
}

TEST_CASE("point filter lifts the pen before dropped points") {
  std::mt19937_64 rng(41);
  const auto emb = Scorer::embedding(24, 24, 8, 3);
  for (int i = 0; i < 20; ++i) {
    const auto s = testing::random_sketch(rng, 24, 24, 12);
    const auto ref = embed(emb, rasterise(testing::random_sketch(rng, 24, 24, 12)));
    const auto rep = filter_noisy_points(s, emb, ref, FilterConfig::points(0.1));
    REQUIRE(rep.filtered.size() == s.size());
    CHECK(rep.filtered.points().back().pen == s.points().back().pen);
    for (std::size_t t = 0; t < s.size(); ++t) {
      CHECK(rep.filtered[t].x == s[t].x);
      const bool next_cut = std::find(rep.removed.begin(), rep.removed.end(), t + 1) != rep.removed.end();
      if (next_cut) {
        CHECK(s[t].pen == PenState::Down);
        CHECK(rep.filtered[t].pen == PenState::Up);
        CHECK_FALSE(keep_by_threshold(rep.normalized[t + 1], 0.1));
      } else {
        CHECK(rep.filtered[t].pen == s[t].pen);
      }
    }
    if (rep.removed.empty()) CHECK(rep.filtered == s);
    CHECK(split_strokes(rep.filtered).size() >= split_strokes(s).size());
  }
}

TEST_CASE("a mid-stroke cut splits the stroke") {
  const VectorSketch s({{0, 0, PenState::Down}, {5, 0, PenState::Down}, {10, 0, PenState::Up}, {10, 0, PenState::End}}, 16,
                       16);
  std::vector<Point> pts(s.points().begin(), s.points().end());
  pts[1].pen = PenState::Up;  // what the point filter does to cut point 2
  const VectorSketch cut(pts, 16, 16);
  CHECK(split_strokes(s).size() == 1);
  CHECK(split_strokes(cut).size() == 2);
}

TEST_CASE("top@k picks the largest values") {
  const std::vector<double> v{0.1, 0.5, 0.3};
  CHECK(top_k_indices(v, 2) == std::vector<std::size_t>{1, 2});
  const std::vector<double> tie{1.0, 2.0, 2.0, 2.0};
  CHECK(top_k_indices(tie, 2) == std::vector<std::size_t>{1, 2});
  CHECK(top_k_indices(v, 9).size() == 3);
}

TEST_CASE("point removal never bridges a gap") {
  const VectorSketch s({{0, 0, PenState::Down}, {5, 0, PenState::Down}, {10, 0, PenState::Down}, {10, 5, PenState::Up},
                        {10, 5, PenState::End}},
                       16, 16);
  const std::size_t idx[] = {1};
  const auto r = remove_points(s, idx);
  REQUIRE(r.size() == 4);
  CHECK(r[0].pen == PenState::Up);
  CHECK(r[1].x == 10.0);
  CHECK_FALSE(r.segment_drawn(1));
  CHECK(r.segment_drawn(2));
  const std::size_t end[] = {4};
  CHECK_THROWS_AS(remove_points(s, end), ValidationError);
}

TEST_CASE("SLA attack removes the small decisive stroke") {
  const auto clf = row_detector();
  const auto s = long_and_short();
  AttackConfig cfg;
  cfg.epsilon = 5;
  const auto out = sla_attack(clf, s, cfg);
  CHECK(out.pred_before == 1);
  CHECK(out.pred_after == 0);
  CHECK(out.success);
  CHECK(out.removed == std::vector<std::size_t>{1});
  CHECK(out.loss_after > out.loss_before);
  CHECK(split_strokes(out.adversarial).size() == 1);

  cfg.epsilon = 1;
  CHECK_THROWS_AS(sla_attack(clf, s, cfg), NoCandidateError);
  const VectorSketch single({{1, 1, PenState::Down}, {4, 4, PenState::Up}}, 16, 16);
  cfg.epsilon = 5;
  CHECK_THROWS_AS(sla_attack(clf, single, cfg), ValidationError);
  CHECK_THROWS_AS(sla_attack(Scorer::embedding(16, 16, 4, 1), s, cfg), ScorerError);
  cfg.epsilon = 0;
  CHECK_THROWS_AS(sla_attack(clf, s, cfg), ValidationError);
}

TEST_CASE("SLA attack picks the stroke with the highest loss") {
  std::mt19937_64 rng(42);
  const auto clf = Scorer::tiny_conv_classifier(24, 24, 3, 12);
  for (int i = 0; i < 10; ++i) {
    const auto s = testing::random_sketch(rng, 24, 24, 12);
    const auto strokes = split_strokes(s);
    if (strokes.size() < 2) continue;
    AttackConfig cfg;
    cfg.epsilon = 3;
    cfg.true_class = 1;
    double best = -1e300;
    bool any = false;
    for (const auto& st : strokes) {
      if (st.length_points > 3) continue;
      any = true;
      const auto img = rasterise(remove_stroke(s, st.index));
      best = std::max(best, cross_entropy(clf.forward(img), 1));
    }
    if (!any) {
      CHECK_THROWS_AS(sla_attack(clf, s, cfg), NoCandidateError);
      continue;
    }
    const auto out = sla_attack(clf, s, cfg);
    CHECK(out.loss_after == doctest::Approx(best));
    CHECK(strokes[out.removed[0]].length_points <= 3);
  }
}

TEST_CASE("P-SLA attack removes the top leave-one-out points") {
  std::mt19937_64 rng(43);
  const auto clf = Scorer::tiny_conv_classifier(24, 24, 3, 13);
  int checked = 0;
  while (checked < 8) {
    const auto s = testing::random_sketch(rng, 24, 24, 12);
    if (s.drawable_point_count() <= 4) continue;
    AttackConfig cfg;
    cfg.mode = AttackMode::PslaRemovePoints;
    cfg.epsilon = 2;
    cfg.true_class = 0;
    std::vector<double> loo;
    for (std::size_t t = 0; t < s.drawable_point_count(); ++t) {
      const std::size_t idx[] = {t};
      try {
        loo.push_back(cross_entropy(clf.forward(soft_render(remove_points(s, idx))), 0));
      } catch (const ValidationError&) {
        loo.push_back(-1e300);
      }
    }
    try {
      const auto out = psla_attack(clf, s, cfg);
      CHECK(out.removed == top_k_indices(loo, 2));
      CHECK(out.removed.size() == 2);
      CHECK(out.adversarial.size() == s.size() - 2);
      CHECK(out.success == (out.pred_after != out.pred_before));
      ++checked;
    } catch (const BudgetError&) {
    }
  }
}

TEST_CASE("P-SLA attack budget guards") {
  const auto clf = Scorer::tiny_conv_classifier(16, 16, 2, 3);
  const VectorSketch s({{1, 1, PenState::Down}, {8, 1, PenState::Down}, {8, 8, PenState::Up}, {8, 8, PenState::End}}, 16,
                       16);
  AttackConfig cfg;
  cfg.mode = AttackMode::PslaRemovePoints;
  cfg.epsilon = 3;
  CHECK_THROWS_AS(psla_attack(clf, s, cfg), BudgetError);
  cfg.epsilon = 2;  // T - 1: one point left, no segment
  CHECK_THROWS_AS(psla_attack(clf, s, cfg), BudgetError);
  cfg.epsilon = 1;
  CHECK(psla_attack(clf, s, cfg).removed.size() == 1);
  cfg.gradient_fast_path = true;
  CHECK(psla_attack(clf, s, cfg).removed.size() == 1);
}

TEST_CASE("benchmark reports one cell per mode and budget") {
  std::vector<LabeledSketch> sketches;
  std::mt19937_64 rng(44);
  for (int i = 0; i < 6; ++i) sketches.push_back({testing::random_sketch(rng, 16, 16, 10), i % 2});
  const auto clf = Scorer::tiny_conv_classifier(16, 16, 2, 4);
  const int eps[] = {1, 3};
  const AttackMode modes[] = {AttackMode::SlaRemoveStroke, AttackMode::PslaRemovePoints};
  const auto res = attack_benchmark(clf, sketches, eps, modes);
  CHECK(res.cells.size() == 4);
  CHECK(res.rows.size() == 24);
  for (const auto& row : res.rows)
    if (!row.attacked) CHECK(row.pred_after == row.pred_before);
  const auto csv = benchmark_csv(res);
  CHECK(csv.rfind("sketch,label,mode,epsilon,pred_before,pred_after,attacked,removed\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 25);
  CHECK(benchmark_summary_json(res).find("\"drop\"") != std::string::npos);
}

TEST_CASE("retrieval reliability ranks the gallery by cosine similarity") {
  std::mt19937_64 rng(45);
  const auto emb = Scorer::embedding(24, 24, 8, 5);
  std::vector<std::vector<double>> gallery;
  for (int i = 0; i < 6; ++i) gallery.push_back(embed(emb, rasterise(testing::random_sketch(rng, 24, 24, 10))));
  const auto s = testing::random_sketch(rng, 24, 24, 10);
  const auto q = embed(emb, rasterise(s));
  for (std::size_t truth = 0; truth < gallery.size(); ++truth) {
    const auto rep = retrieval_reliability(s, emb, gallery, truth);
    std::size_t better = 0;
    for (const auto& g : gallery) better += cosine_similarity(q, g) > cosine_similarity(q, gallery[truth]);
    CHECK(*rep.true_rank == better + 1);
    CHECK(rep.stroke_scores.size() == split_strokes(s).size());
  }
  const std::vector<std::vector<double>> one{gallery[3]};
  CHECK(*retrieval_reliability(s, emb, one, 0).true_rank == 1);
  ReliabilityConfig pc;
  pc.granularity = Granularity::Point;
  CHECK(retrieval_reliability(s, emb, gallery, 0, pc).stroke_scores.size() == split_strokes(s).size());
  const std::vector<std::vector<double>> none;
  CHECK_THROWS_AS(retrieval_reliability(s, emb, none), ValidationError);
}
