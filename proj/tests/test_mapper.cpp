#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>

#include "dualface/random.hpp"
#include "dualface/sketch_mask_mapper.hpp"
#include "dualface/synthetic_faces.hpp"
#include "support.hpp"

using namespace dualface;

namespace {

const Palette kPalette = Palette::celebamask_hq();

LabelMask rect_mask(int w, int h, std::vector<std::tuple<LabelId, int, int, int, int>> rects) {
  Grid<LabelId> g(w, h, kBackgroundLabel);
  for (auto [k, x0, y0, x1, y1] : rects) {
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) g.at(x, y) = k;
    }
  }
  return LabelMask(std::move(g), kPalette);
}

double brute_distance(const LabelMask& m, LabelId k, int px, int py) {
  double best = std::numeric_limits<double>::infinity();
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) {
      if (m.at(x, y) == k) best = std::min(best, std::hypot(x - px, y - py));
    }
  }
  return best;
}

LabelId brute_vertex_label(const LabelMask& m, Vertex v) {
  const PixelPos p = vertex_pixel(v, m.size());
  LabelId best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (LabelId k : m.present_labels()) {
    if (k == kBackgroundLabel) continue;
    const double d = brute_distance(m, k, p.x, p.y);
    if (d < best_d) best_d = d, best = k;
  }
  return best;
}

LabelId brute_stroke_label(const LabelMask& m, const Stroke& s) {
  std::map<LabelId, int> votes;
  for (auto v : s.vertices) ++votes[brute_vertex_label(m, v)];
  int top = 0;
  for (auto [k, n] : votes) top = std::max(top, n);
  LabelId best = 0;
  double best_sum = std::numeric_limits<double>::infinity();
  for (auto [k, n] : votes) {
    if (n != top) continue;
    double sum = 0;
    for (auto v : s.vertices) {
      const PixelPos p = vertex_pixel(v, m.size());
      sum += brute_distance(m, k, p.x, p.y);
    }
    if (sum < best_sum - 1e-12) best_sum = sum, best = k;
  }
  return best;
}

Stroke make_stroke(std::vector<Vertex> pts) {
  Stroke s;
  s.vertices = std::move(pts);
  return s;
}

StrokeSet strokes_of(CanvasSize c, const std::vector<std::vector<Vertex>>& polylines) {
  StrokeSet s(c);
  for (const auto& p : polylines) s = add_stroke(s, p, 2.0);
  return s;
}

std::vector<Vertex> square_outline(double x0, double y0, double x1, double y1, double step) {
  std::vector<Vertex> pts;
  for (double x = x0; x < x1; x += step) pts.push_back({x, y0});
  for (double y = y0; y < y1; y += step) pts.push_back({x1, y});
  for (double x = x1; x > x0; x -= step) pts.push_back({x, y1});
  for (double y = y1; y > y0; y -= step) pts.push_back({x0, y});
  return pts;
}

std::vector<Vertex> ellipse_outline(Vertex c, double rx, double ry, int n) {
  std::vector<Vertex> pts;
  for (int i = 0; i < n; ++i) {
    const double t = 2 * std::numbers::pi * i / n;
    pts.push_back({c.x + rx * std::cos(t), c.y + ry * std::sin(t)});
  }
  return pts;
}

}  // namespace

TEST_CASE("distance transform matches brute force") {
  Rng rng(1);
  for (int trial = 0; trial < 30; ++trial) {
    BinaryRaster r(32, 32, 0);
    const int n = int(rng.below(6));
    for (int i = 0; i < n; ++i) r.at(int(rng.below(32)), int(rng.below(32))) = 1;
    const auto dt = squared_distance_transform(r);
    for (int y = 0; y < 32; ++y) {
      for (int x = 0; x < 32; ++x) {
        std::uint32_t best = std::numeric_limits<std::uint32_t>::max();
        for (int yy = 0; yy < 32; ++yy) {
          for (int xx = 0; xx < 32; ++xx) {
            if (r.at(xx, yy)) best = std::min<std::uint32_t>(best, (x - xx) * (x - xx) + (y - yy) * (y - yy));
          }
        }
        REQUIRE(dt.at(x, y) == best);
      }
    }
  }
  BinaryRaster single(40, 20, 0);
  single.at(5, 5) = 1;
  CHECK(squared_distance_transform(single).at(15, 5) == 100);
}

TEST_CASE("vertex labels match a brute-force nearest-region scan") {
  Rng rng(2);
  int cases = 0;
  for (int trial = 0; trial < 25; ++trial) {
    const LabelMask m = testing::random_blob_mask(rng, 32, 32, {1, 2, 4, 5, 13}, 6);
    if (m.present_labels().size() < 2) continue;
    const RegionDistanceField f = build_distance_fields(m);
    for (int i = 0; i < 50; ++i) {
      const Vertex v{rng.uniform(0, 31), rng.uniform(0, 31)};
      REQUIRE(vertex_label(v, f) == brute_vertex_label(m, v));
      const PixelPos p = vertex_pixel(v, m.size());
      for (LabelId k : f.labels()) CHECK(f.distance(k, p.x, p.y) == doctest::Approx(brute_distance(m, k, p.x, p.y)));
      ++cases;
    }
  }
  CHECK(cases >= 1000);
}

TEST_CASE("stroke labels match a brute-force vote") {
  Rng rng(3);
  for (int trial = 0; trial < 40; ++trial) {
    const LabelMask m = testing::random_blob_mask(rng, 32, 32, {1, 2, 4, 5}, 6);
    if (m.present_labels().size() < 2) continue;
    const RegionDistanceField f = build_distance_fields(m);
    for (int i = 0; i < 10; ++i) {
      std::vector<Vertex> pts;
      for (std::uint64_t j = 0, n = 1 + rng.below(8); j < n; ++j) pts.push_back({rng.uniform(0, 31), rng.uniform(0, 31)});
      REQUIRE(stroke_label(make_stroke(pts), f) == brute_stroke_label(m, make_stroke(pts)));
    }
  }
}

TEST_CASE("labeling tie rules") {
  // Equidistant from eye regions 4 and 5: the lower id wins.
  const LabelMask m = rect_mask(40, 20, {{4, 0, 0, 9, 19}, {5, 29, 0, 39, 19}});
  const RegionDistanceField f = build_distance_fields(m);
  CHECK(vertex_label({19.2, 10}, f) == 4);  // pixel 19: distance 10 to both regions
  CHECK(vertex_label({20, 10}, f) == 5);
  CHECK(vertex_label({18, 10}, f) == 4);

  // Majority 6 to 4.
  std::vector<Vertex> pts;
  for (int i = 0; i < 6; ++i) pts.push_back({5, double(i)});
  for (int i = 0; i < 4; ++i) pts.push_back({35, double(i)});
  CHECK(stroke_label(make_stroke(pts), f) == 4);

  // 2 votes each: the smaller summed distance wins even for the higher id.
  const std::vector<Vertex> tie{{12, 5}, {12, 6}, {35, 5}, {35, 6}};
  CHECK(stroke_label(make_stroke(tie), f) == 5);
  // Equal sums: lowest id.
  const std::vector<Vertex> even{{5, 5}, {33, 5}};
  CHECK(stroke_label(make_stroke(even), f) == 4);
}

TEST_CASE("background-only masks cannot label strokes") {
  const LabelMask m = rect_mask(16, 16, {});
  CHECK_THROWS_AS(vertex_label({3, 3}, build_distance_fields(m)), ValidationError);
}

TEST_CASE("template score matches the per-stroke mean distance sum") {
  Rng rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const LabelMask m = testing::random_blob_mask(rng, 32, 32, {1, 2, 4, 10}, 5);
    if (m.present_labels().size() < 2) continue;
    StrokeSet s({32, 32});
    for (std::uint64_t i = 0, n = 1 + rng.below(4); i < n; ++i) {
      std::vector<Vertex> pts;
      for (std::uint64_t j = 0, nv = 1 + rng.below(6); j < nv; ++j) pts.push_back({rng.uniform(0, 31), rng.uniform(0, 31)});
      s = add_stroke(s, pts, 1);
    }
    double expected = 0;
    for (const auto& st : s.strokes()) {
      const LabelId k = brute_stroke_label(m, st);
      double sum = 0;
      for (auto v : st.vertices) {
        const PixelPos p = vertex_pixel(v, m.size());
        sum += brute_distance(m, k, p.x, p.y);
      }
      expected += sum / st.vertices.size();
    }
    CHECK(template_score(s, m) == doctest::Approx(expected).epsilon(1e-9));
  }
}

TEST_CASE("template score is zero exactly when every vertex lies in its region") {
  const LabelMask m = rect_mask(64, 64, {{1, 0, 0, 10, 63}, {2, 40, 40, 50, 50}});
  CHECK(template_score(strokes_of({64, 64}, {{{5, 5}, {8, 30}}, {{45, 45}}}), m) == 0.0);
  CHECK(template_score(strokes_of({64, 64}, {{{17, 20}}}), m) == doctest::Approx(7.0));
  CHECK(template_score(strokes_of({64, 64}, {{{5, 5}, {8, 30}}, {{45, 45}, {52, 45}}}), m) > 0.0);
  CHECK_THROWS_AS(template_score(StrokeSet({64, 64}), m), ValidationError);
}

TEST_CASE("merge concatenates same-label strokes in order") {
  std::vector<LabeledStroke> group;
  std::vector<Vertex> a, b;
  for (int i = 0; i < 5; ++i) a.push_back({double(i), 0});
  for (int i = 0; i < 7; ++i) b.push_back({double(i), 1});
  group.push_back({make_stroke(a), 4});
  group.push_back({make_stroke(b), 4});
  const auto merged = merge_strokes(group);
  REQUIRE(merged.size() == 12);
  CHECK(merged[4] == a[4]);
  CHECK(merged[5] == b[0]);
  group.push_back({make_stroke(a), 5});
  CHECK_THROWS_AS(merge_strokes(group), ValidationError);
}

TEST_CASE("no strokes leaves the template unchanged") {
  const SyntheticFace face = render_face({});
  const MergedMask m = map_sketch_to_mask(StrokeSet{}, face.mask);
  CHECK(m.mask == face.mask);
  for (const auto& [k, src] : m.provenance) CHECK(src == RegionSource::kTemplate);
  CHECK(m.warnings.empty());
}

TEST_CASE("a drawn square replaces the skin square") {
  const LabelMask t = rect_mask(512, 512, {{1, 100, 100, 300, 300}});
  const StrokeSet s = strokes_of(kDefaultCanvas, {square_outline(150, 150, 350, 350, 10)});
  const MergedMask m = map_sketch_to_mask(s, t);
  CHECK(m.provenance.at(1) == RegionSource::kStrokes);
  for (int y = 0; y < 512; y += 1) {
    for (int x = 0; x < 512; x += 1) {
      const bool inside = x >= 150 && x <= 350 && y >= 150 && y <= 350;
      const bool near_edge = std::abs(x - 150) <= 1 || std::abs(x - 350) <= 1 || std::abs(y - 150) <= 1 ||
                             std::abs(y - 350) <= 1;
      if (!near_edge) REQUIRE((m.mask.at(x, y) == 1) == inside);
    }
  }
}

TEST_CASE("redrawing the left eye moves only the left eye") {
  // Wide template eye; the smaller redrawn eye sits inside it, shifted toward the nose.
  FaceParams p;
  p.eye_rx = 30;
  p.eye_ry = 16;
  const SyntheticFace face = render_face(p);
  const Vertex eye = left_eye_center(p);
  const StrokeSet s = strokes_of(kDefaultCanvas, {ellipse_outline({eye.x + 14, eye.y}, 14, 7, 24)});
  const MergedMask m = map_sketch_to_mask(s, face.mask);
  const LabelId l_eye = *kPalette.find("l_eye");
  const LabelId skin = *kPalette.find("skin");
  REQUIRE(m.labeled_strokes.size() == 1);
  CHECK(m.labeled_strokes[0].label == l_eye);
  CHECK(m.provenance.at(l_eye) == RegionSource::kStrokes);
  REQUIRE(m.hulls.contains(l_eye));

  int changed_elsewhere = 0;
  for (int y = 0; y < 512; ++y) {
    for (int x = 0; x < 512; ++x) {
      const LabelId before = face.mask.at(x, y);
      const LabelId after = m.mask.at(x, y);
      const Vertex px{double(x), double(y)};
      if (polygon_contains(m.hulls.at(l_eye), px, 0.0)) {
        REQUIRE(after == l_eye);
      } else if (polygon_contains(m.hulls.at(l_eye), px, 1.0)) {
        continue;  // outline pixels of the filled hull
      } else if (before == l_eye) {
        REQUIRE(after != l_eye);
        CHECK(after == skin);  // vacated eye pixels fall back to the skin under them
      } else if (after != before) {
        ++changed_elsewhere;
      }
    }
  }
  // Only the drawn outline ring can differ beyond the hull interior.
  CHECK(changed_elsewhere <= 200);
  for (LabelId k : face.mask.present_labels()) {
    if (k != l_eye && k != kBackgroundLabel) CHECK(m.provenance.at(k) == RegionSource::kTemplate);
  }
}

TEST_CASE("every template label survives mapping") {
  // A huge skin hull covers the nose completely; it stays because it outranks skin.
  const LabelMask t = rect_mask(128, 128, {{1, 20, 20, 100, 100}, {2, 55, 55, 60, 60}});
  const StrokeSet s = strokes_of({128, 128}, {square_outline(5, 5, 120, 120, 8)});
  const MergedMask m = map_sketch_to_mask(s, t);
  for (LabelId k : t.present_labels()) CHECK(m.mask.histogram().contains(k));
}

TEST_CASE("collinear strokes fall back to a band with a warning") {
  const LabelMask t = rect_mask(128, 128, {{1, 20, 20, 100, 100}});
  const StrokeSet s = strokes_of({128, 128}, {{{30, 60}, {60, 60}, {90, 60}}});
  const MergedMask m = map_sketch_to_mask(s, t);
  CHECK_FALSE(m.warnings.empty());
  CHECK(m.mask.at(60, 60) == 1);
  CHECK(m.mask.at(60, 20) == kBackgroundLabel);
}

TEST_CASE("mapping is deterministic, keeps stroke vertices in their region and is translation invariant") {
  Rng rng(6);
  for (int trial = 0; trial < 5; ++trial) {
    const FaceParams p = random_face_params(rng);
    const SyntheticFace face = render_face(p);
    StrokeSet s;
    for (int i = 0; i < 4; ++i) {
      const Vertex c{rng.uniform(150, 350), rng.uniform(150, 350)};
      s = add_stroke(s, ellipse_outline(c, rng.uniform(8, 30), rng.uniform(8, 30), 12), 2);
    }
    const MergedMask a = map_sketch_to_mask(s, face.mask);
    const MergedMask b = map_sketch_to_mask(s, face.mask);
    CHECK(a.mask == b.mask);
    CHECK(a.warnings == b.warnings);
    for (const auto& ls : a.labeled_strokes) {
      for (auto v : ls.stroke.vertices) {
        const PixelPos px = vertex_pixel(v, kDefaultCanvas);
        const LabelId got = a.mask.at(px.x, px.y);
        CHECK((got == ls.label || kPalette.precedence(got) <= kPalette.precedence(ls.label)));
      }
    }

    // Shift mask and strokes by the same offset: labels are unchanged.
    const int dx = 7, dy = -5;
    Grid<LabelId> shifted(512, 512, kBackgroundLabel);
    for (int y = 0; y < 512; ++y) {
      for (int x = 0; x < 512; ++x) {
        if (shifted.contains(x + dx, y + dy)) shifted.at(x + dx, y + dy) = face.mask.at(x, y);
      }
    }
    StrokeSet moved;
    for (const auto& st : s.strokes()) {
      std::vector<Vertex> pts;
      for (auto v : st.vertices) pts.push_back({v.x + dx, v.y + dy});
      moved = add_stroke(moved, pts, st.width);
    }
    const auto la = label_strokes(s, build_distance_fields(face.mask));
    const auto lb = label_strokes(moved, build_distance_fields(LabelMask(shifted, kPalette)));
    for (std::size_t i = 0; i < la.size(); ++i) CHECK(la[i].label == lb[i].label);
  }
}

TEST_CASE("template selection picks the lowest score, earliest on ties") {
  const LabelMask near_mask = rect_mask(64, 64, {{1, 10, 10, 30, 30}});
  const LabelMask far_mask = rect_mask(64, 64, {{1, 40, 40, 60, 60}});
  const StrokeSet s = strokes_of({64, 64}, {{{20, 20}, {25, 25}}});
  const std::vector<LabelMask> ts{far_mask, near_mask, near_mask};
  CHECK(select_template(s, ts) == 1);
  CHECK(select_template(StrokeSet({64, 64}), ts) == 0);
  CHECK_THROWS_AS(select_template(s, std::vector<LabelMask>{}), ValidationError);
}

TEST_CASE("debug rasters are written") {
  testing::TempDir dir;
  const MergedMask m = map_sketch_to_mask(StrokeSet{}, render_face({}).mask);
  write_mapping_debug(m, dir.path());
  CHECK(std::filesystem::exists(dir / "merged_mask.png"));
  CHECK(std::filesystem::exists(dir / "provenance.png"));
}
