#include <doctest.h>

#include <random>

#include "strokescope/errors.hpp"
#include "strokescope/sketch.hpp"
#include "support.hpp"

using namespace strokescope;

namespace {

constexpr const char* kTwoStrokes =
    R"({"canvas":[32,32],"points":[[1,1,1,0,0],[10,1,0,1,0],[1,5,1,0,0],[1,9,1,0,0],[5,9,0,0,1]]})";

} // namespace

TEST_CASE("stroke-5 parsing and stroke split") {
  const auto s = parse_vector_sketch(kTwoStrokes, SketchFormat::Stroke5Json);
  CHECK(s.size() == 5);
  CHECK(s.canvas_w() == 32);
  CHECK(s.has_end());
  CHECK(s.drawable_point_count() == 4);

  const auto strokes = split_strokes(s);
  REQUIRE(strokes.size() == 2);
  CHECK(strokes[0].length_points == 2);
  CHECK(strokes[0].length_px == doctest::Approx(9.0));
  CHECK(strokes[1].first_point == 2);
  CHECK(strokes[1].length_points == 2);

  // The segment into the End marker carries no ink.
  CHECK(s.segment_drawn(1));
  CHECK_FALSE(s.segment_drawn(2));
  CHECK(s.segment_drawn(3));
  CHECK_FALSE(s.segment_drawn(4));
}

TEST_CASE("stroke-5 rejects malformed input") {
  CHECK_THROWS_AS(parse_vector_sketch("{\"points\":[[1,2", SketchFormat::Stroke5Json), ParseError);
  CHECK_THROWS_AS(parse_vector_sketch(R"({"points":[[1,2,1,1,0]]})", SketchFormat::Stroke5Json),
                  ValidationError);
  CHECK_THROWS_AS(parse_vector_sketch(R"({"points":[[1,2,0,0,1],[3,4,1,0,0]]})", SketchFormat::Stroke5Json),
                  ValidationError);
  CHECK_THROWS_AS(parse_vector_sketch(R"({"points":[[1,2,0,1,0]]})", SketchFormat::Stroke5Json),
                  ValidationError);
  CHECK_THROWS_AS(parse_vector_sketch(R"({"points":[]})", SketchFormat::Stroke5Json), ValidationError);
  CHECK_THROWS_AS(parse_vector_sketch(R"({"points":[[1,2,1,0]]})", SketchFormat::Stroke5Json), ParseError);
}

TEST_CASE("parse errors carry a byte offset") {
  try {
    parse_vector_sketch("{\"points\": [1, }", SketchFormat::Stroke5Json);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.byte_offset() == 15);
    CHECK(e.code() == "parse_error");
  }
}

TEST_CASE("stroke-3 deltas accumulate and lift closes a stroke") {
  const auto s = parse_vector_sketch("[[2,3,0],[4,0,1],[0,5,0],[1,1,1]]\n", SketchFormat::Stroke3Ndjson);
  REQUIRE(s.size() == 4);
  CHECK(s[1].x == 6.0);
  CHECK(s[1].y == 3.0);
  CHECK(s[1].pen == PenState::Up);
  CHECK(s[3].x == 7.0);
  CHECK(s[3].y == 9.0);
  CHECK(split_strokes(s).size() == 2);
}

TEST_CASE("QuickDraw NDJSON lines with labels") {
  const std::string data =
      "{\"word\":\"cat\",\"strokes\":[[[0,10,20],[0,5,0]],[[3,4],[8,9]]]}\n"
      "\n"
      "{\"word\":\"dog\",\"strokes\":[[[1,2],[1,2]]]}\n";
  const auto drawings = parse_ndjson_drawings(data);
  REQUIRE(drawings.size() == 2);
  CHECK(drawings[0].label == "cat");
  CHECK(split_strokes(drawings[0].sketch).size() == 2);
  CHECK(drawings[1].label == "dog");
  CHECK_THROWS_AS(parse_ndjson_drawings("{\"word\":\"x\"}\n"), ParseError);
}

TEST_CASE("stroke-5 serialisation round-trips") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 50; ++i) {
    const auto s = testing::random_sketch(rng, 64, 48, 10);
    CHECK(parse_vector_sketch(serialize_stroke5(s), SketchFormat::Stroke5Json) == s);
  }
}

TEST_CASE("merge_strokes inverts split_strokes") {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 50; ++i) {
    const auto s = testing::random_sketch(rng, 40, 40, 12);
    const auto strokes = split_strokes(s);
    const auto merged = merge_strokes(strokes, s.canvas_w(), s.canvas_h(), s.points().back());
    CHECK(merged == s);
  }
}

TEST_CASE("a lone point between two lifts is a one-point stroke") {
  const VectorSketch s({{0, 0, PenState::Down}, {4, 0, PenState::Up}, {9, 9, PenState::Up}, {2, 2, PenState::End}}, 16,
                       16);
  const auto strokes = split_strokes(s);
  REQUIRE(strokes.size() == 2);
  CHECK(strokes[1].length_points == 1);
  CHECK(point_stroke_index(s) == std::vector<std::size_t>{0, 0, 1});
}

TEST_CASE("normalise fits the bounding box inside the margin") {
  const VectorSketch s({{100, 50, PenState::Down}, {300, 150, PenState::Up}}, 1000, 1000);
  const auto n = normalize(s, 100, 100, 0.1);
  CHECK(n.canvas_w() == 100);
  double lo = 1e9, hi = -1e9;
  for (const auto& p : n.points()) {
    lo = std::min({lo, p.x, p.y});
    hi = std::max({hi, p.x, p.y});
  }
  CHECK(lo >= 10.0 - 1e-9);
  CHECK(hi <= 90.0 + 1e-9);
  CHECK(n[0].pen == PenState::Down);
  CHECK_THROWS_AS(normalize(s, 0, 10), ValidationError);
}
