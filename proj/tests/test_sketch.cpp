#include <doctest.h>

#include <cmath>
#include <json.hpp>

#include "dualface/random.hpp"
#include "dualface/sketch.hpp"

using namespace dualface;

namespace {

std::vector<Vertex> random_polyline(Rng& rng, std::size_t n, CanvasSize c = kDefaultCanvas) {
  std::vector<Vertex> pts;
  for (std::size_t i = 0; i < n; ++i) pts.push_back({rng.uniform(0, c.width - 1), rng.uniform(0, c.height - 1)});
  return pts;
}

std::vector<std::int64_t> orders(const StrokeSet& s) {
  std::vector<std::int64_t> out;
  for (const auto& st : s.strokes()) out.push_back(st.order);
  return out;
}

double segment_distance(double px, double py, Vertex a, Vertex b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 == 0 ? 0 : ((px - a.x) * dx + (py - a.y) * dy) / len2;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(px - (a.x + t * dx), py - (a.y + t * dy));
}

}  // namespace

TEST_CASE("add_stroke appends with monotone orders") {
  StrokeSet s;
  s = add_stroke(s, {{10, 10}, {20, 20}, {30, 10}}, 2.0);
  REQUIRE(s.size() == 1);
  CHECK(s.strokes()[0].order == 0);
  s = add_stroke(s, {{1, 1}}, 1.0);
  s = add_stroke(s, {{5, 5}, {6, 6}}, 1.0);
  CHECK(orders(s) == std::vector<std::int64_t>{0, 1, 2});
  CHECK(s.strokes()[0].id != s.strokes()[1].id);
  CHECK(s.strokes()[1].id != s.strokes()[2].id);
}

TEST_CASE("add_stroke rejects bad input") {
  StrokeSet s;
  CHECK_THROWS_AS(add_stroke(s, {}, 1.0), ValidationError);
  CHECK_THROWS_AS(add_stroke(s, {{600, 10}}, 1.0), ValidationError);
  CHECK_THROWS_AS(add_stroke(s, {{512, 10}}, 1.0), ValidationError);
  CHECK_THROWS_AS(add_stroke(s, {{-0.5, 10}}, 1.0), ValidationError);
  CHECK_THROWS_AS(add_stroke(s, {{10, 10}}, 0.0), ValidationError);
  CHECK_NOTHROW(add_stroke(s, {{511.9, 0}}, 1.0));
}

TEST_CASE("erase_stroke hits, misses and breaks ties toward the newest stroke") {
  StrokeSet s;
  s = add_stroke(s, {{100, 100}, {200, 100}}, 1.0);  // A
  s = add_stroke(s, {{100, 110}, {200, 110}}, 1.0);  // B, parallel
  const auto a_id = s.strokes()[0].id;
  const auto b_id = s.strokes()[1].id;

  StrokeSet hit = erase_stroke(s, {100, 100});
  REQUIRE(hit.size() == 1);
  CHECK(hit.strokes()[0].id == b_id);

  CHECK(erase_stroke(s, {400, 400}) == s);

  StrokeSet tie = erase_stroke(s, {150, 105}, 6.0);
  REQUIRE(tie.size() == 1);
  CHECK(tie.strokes()[0].id == a_id);
}

TEST_CASE("undo removes the newest stroke and keeps the order counter") {
  StrokeSet empty;
  CHECK(undo(empty) == empty);

  StrokeSet s = add_stroke(add_stroke(StrokeSet{}, {{1, 1}}, 1), {{2, 2}}, 1);
  StrokeSet u = undo(s);
  REQUIRE(u.size() == 1);
  CHECK(u.strokes()[0].vertices[0] == Vertex{1, 1});

  StrokeSet r = add_stroke(undo(add_stroke(add_stroke(StrokeSet{}, {{1, 1}}, 1), {{2, 2}}, 1)), {{3, 3}}, 1);
  CHECK(orders(r) == std::vector<std::int64_t>{0, 2});
  CHECK(r.strokes()[1].vertices[0] == Vertex{3, 3});
}

TEST_CASE("random edit sequences match a list model and keep orders increasing") {
  Rng rng(42);
  for (int trial = 0; trial < 50; ++trial) {
    StrokeSet s;
    struct ModelStroke {
      std::vector<Vertex> pts;
      std::int64_t order;
    };
    std::vector<ModelStroke> model;
    std::int64_t next = 0;
    for (int step = 0; step < 40; ++step) {
      const auto op = rng.below(3);
      if (op < 2) {
        auto pts = random_polyline(rng, 1 + rng.below(5));
        s = add_stroke(s, pts, 1 + double(rng.below(4)));
        model.push_back({pts, next++});
      } else {
        s = undo(s);
        if (!model.empty()) model.pop_back();
      }
      REQUIRE(s.size() == model.size());
      for (std::size_t i = 0; i < model.size(); ++i) {
        CHECK(s.strokes()[i].vertices == model[i].pts);
        CHECK(s.strokes()[i].order == model[i].order);
        if (i > 0) CHECK(s.strokes()[i].order > s.strokes()[i - 1].order);
      }
    }
  }
}

TEST_CASE("rasterize draws Bresenham runs") {
  StrokeSet empty;
  CHECK(count_ink(rasterize(empty)) == 0);

  StrokeSet s = add_stroke(StrokeSet{}, {{10, 20}, {30, 20}}, 1.0);
  const SketchRaster r = rasterize(s);
  for (int y = 0; y < r.height(); ++y) {
    for (int x = 0; x < r.width(); ++x) {
      // Oracle: pixel centre within half a pixel of the segment.
      const bool expected = segment_distance(x, y, {10, 20}, {30, 20}) <= 0.5;
      REQUIRE(bool(r.at(x, y)) == expected);
    }
  }
  CHECK(count_ink(r) == 21);
}

TEST_CASE("rasterized segments of width 1 stay within half a pixel and have one pixel per major step") {
  Rng rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    const Vertex a{double(rng.below(64)), double(rng.below(64))};
    const Vertex b{double(rng.below(64)), double(rng.below(64))};
    const StrokeSet s = add_stroke(StrokeSet({64, 64}), {a, b}, 1.0);
    const SketchRaster r = rasterize(s, {64, 64});
    const int steps = std::max(std::abs(int(b.x - a.x)), std::abs(int(b.y - a.y)));
    CHECK(count_ink(r) == std::size_t(steps + 1));
    for (int y = 0; y < 64; ++y) {
      for (int x = 0; x < 64; ++x) {
        if (r.at(x, y)) CHECK(segment_distance(x, y, a, b) <= 0.5 + 1e-9);
      }
    }
  }
}

TEST_CASE("rasterize is deterministic and ignores stroke ids") {
  Rng rng(3);
  StrokeSet s;
  for (int i = 0; i < 8; ++i) s = add_stroke(s, random_polyline(rng, 6), 1 + double(rng.below(6)));
  CHECK(rasterize(s) == rasterize(s));

  std::vector<Stroke> renumbered = s.strokes();
  for (auto& st : renumbered) st.id += 1000;
  CHECK(rasterize(make_stroke_set(s.canvas(), renumbered)) == rasterize(s));
}

TEST_CASE("erase after add on the stroke restores the set") {
  Rng rng(5);
  StrokeSet s;
  s = add_stroke(s, {{50, 50}, {60, 60}}, 2);
  const std::vector<Vertex> p{{300, 300}, {400, 300}};
  StrokeSet t = add_stroke(s, p, 2);
  CHECK(erase_stroke(t, {350, 300}) == s);
}

TEST_CASE("sketch documents round-trip exactly") {
  Rng rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    StrokeSet s;
    const int n = static_cast<int>(rng.below(8));
    for (int i = 0; i < n; ++i) s = add_stroke(s, random_polyline(rng, 1 + rng.below(12)), rng.uniform(0.5, 12));
    if (rng.below(2)) s = undo(s);
    const LoadedSketch back = load_sketch(save_sketch(s));
    CHECK(back.sketch == s);
    CHECK(back.warnings.empty());
    CHECK(save_sketch(back.sketch) == save_sketch(s));
  }
}

TEST_CASE("sketch document schema errors name the field") {
  const std::string doc =
      R"({"version":1,"canvas":[512,512],"strokes":[{"id":1,"order":0,"points":[[1,2],[3,4]]}]})";
  try {
    load_sketch(doc);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("width") != std::string::npos);
  }
  CHECK_THROWS_AS(load_sketch("not json"), ParseError);
  CHECK_THROWS_AS(load_sketch(R"({"version":2,"canvas":[512,512],"strokes":[]})"), ParseError);
}

TEST_CASE("non-monotone orders are re-sequenced with a warning") {
  const std::string doc = R"({"version":1,"canvas":[512,512],"strokes":[
    {"id":1,"width":1,"order":5,"points":[[1,1]]},
    {"id":2,"width":1,"order":2,"points":[[2,2]]},
    {"id":3,"width":1,"order":9,"points":[[3,3]]}]})";
  const LoadedSketch l = load_sketch(doc);
  CHECK_FALSE(l.warnings.empty());
  REQUIRE(l.sketch.size() == 3);
  CHECK(l.sketch.strokes()[0].id == 2);
  CHECK(l.sketch.strokes()[1].id == 1);
  CHECK(l.sketch.strokes()[2].id == 3);
  CHECK(orders(l.sketch) == std::vector<std::int64_t>{0, 1, 2});
}
