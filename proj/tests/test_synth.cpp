#include <doctest.h>

#include <cmath>

#include "dualface/image_io.hpp"
#include "dualface/portrait_synth.hpp"
#include "dualface/synthetic_faces.hpp"
#include "support.hpp"

using namespace dualface;
namespace fs = std::filesystem;

namespace {

const Palette kPalette = Palette::celebamask_hq();

struct Fixture {
  testing::TempDir dir;
  std::vector<DatasetEntry> entries;
  std::vector<SyntheticFace> faces;

  explicit Fixture(int n) {
    Rng rng(3);
    for (int i = 0; i < n; ++i) {
      const SyntheticFace f = render_face(random_face_params(rng), kDefaultCanvas, i);
      const std::string id = "f" + std::to_string(i);
      const fs::path mask = dir / (id + "_mask.png");
      const fs::path image = dir / (id + "_img.png");
      write_gray8(mask, f.mask.labels());
      write_gray8(image, f.image);
      entries.push_back({id, {}, mask, image});
      faces.push_back(f);
    }
  }
};

GrayImage gradient(int w, int h) {
  GrayImage g(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) g.at(x, y) = std::uint8_t((x * 3 + y * 5) % 200 + 20);
  }
  return g;
}

LabelMask two_rects(int eye_x) {
  Grid<LabelId> g(128, 128, kBackgroundLabel);
  for (int y = 10; y < 118; ++y) {
    for (int x = 10; x < 118; ++x) g.at(x, y) = 1;
  }
  for (int y = 40; y < 55; ++y) {
    for (int x = eye_x; x < eye_x + 25; ++x) g.at(x, y) = 4;
  }
  return LabelMask(std::move(g), kPalette);
}

}  // namespace

TEST_CASE("background mask marks every non-background label") {
  const SyntheticFace f = render_face({});
  const BinaryBackgroundMask b = background_mask(f.mask);
  for (int y = 0; y < 512; ++y) {
    for (int x = 0; x < 512; ++x) REQUIRE(b.at(x, y) == (f.mask.at(x, y) != kBackgroundLabel));
  }
}

TEST_CASE("styles parse and print") {
  CHECK(parse_portrait_style("photo") == PortraitStyle::kPhoto);
  CHECK(parse_portrait_style(to_string(PortraitStyle::kSketchLines)) == PortraitStyle::kSketchLines);
  CHECK_THROWS_AS(parse_portrait_style("oil"), ValidationError);
}

TEST_CASE("composite of an unchanged mask reproduces the template image") {
  testing::TempDir dir;
  const LabelMask m = two_rects(30);
  const GrayImage img = gradient(128, 128);
  write_gray8(dir / "img.png", img);
  const DatasetEntry e{"t", {}, {}, dir / "img.png"};
  const GrayImage out = RegionCompositeSynthesizer().synthesize({m, m, e, PortraitStyle::kPhoto});
  for (int y = 0; y < 128; ++y) {
    for (int x = 0; x < 128; ++x) {
      REQUIRE(out.at(x, y) == (m.at(x, y) == kBackgroundLabel ? 255 : img.at(x, y)));
    }
  }
}

TEST_CASE("composite carries a shifted region's content along") {
  testing::TempDir dir;
  const LabelMask source = two_rects(30);
  const LabelMask merged = two_rects(50);
  const GrayImage img = gradient(128, 128);
  write_gray8(dir / "img.png", img);
  const DatasetEntry e{"t", {}, {}, dir / "img.png"};
  const GrayImage out = RegionCompositeSynthesizer().synthesize({merged, source, e, PortraitStyle::kPhoto});
  for (int y = 40; y < 55; ++y) {
    for (int x = 50; x < 75; ++x) CHECK(std::abs(int(out.at(x, y)) - int(img.at(x - 20, y))) <= 1);
  }
}

TEST_CASE("line stylization") {
  const GrayImage flat(64, 64, 128);
  const GrayImage flat_lines = stylize_lines(flat);
  for (auto v : flat_lines.cells()) REQUIRE(v == 255);

  GrayImage step(64, 64, 200);
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 32; ++x) step.at(x, y) = 40;
  }
  const GrayImage lines = stylize_lines(step);
  for (auto v : lines.cells()) REQUIRE((v == 0 || v == 255));
  for (int y = 0; y < 64; ++y) {
    CHECK(lines.at(31, y) == 0);   // dark side of the edge
    CHECK(lines.at(10, y) == 255);
    CHECK(lines.at(50, y) == 255);
  }
  StylizeParams bad;
  bad.k = 1.0;
  CHECK_THROWS_AS(stylize_lines(flat, bad), ValidationError);
}

TEST_CASE("registry creates builtins and rejects unknown names") {
  const SynthesizerRegistry r = SynthesizerRegistry::with_builtins();
  CHECK(r.contains("region-composite"));
  CHECK(r.contains("external"));
  CHECK(r.create({}).get()->name() == "region-composite");
  SynthConfig unknown;
  unknown.impl = "pix2pix";
  CHECK_THROWS_AS(r.create(unknown), NotFoundError);
  SynthConfig ext;
  ext.impl = "external";
  ext.external_command = "true";
  CHECK_THROWS_AS(r.create(ext), ValidationError);
}

TEST_CASE("external process synthesizer runs the command") {
  Fixture fx(1);
  const ExternalProcessSynthesizer copy("cp {image} {out}");
  const GrayImage out = copy.synthesize({fx.faces[0].mask, fx.faces[0].mask, fx.entries[0], PortraitStyle::kPhoto});
  CHECK(out == fx.faces[0].image);

  const ExternalProcessSynthesizer failing("false {out}");
  CHECK_THROWS_AS(failing.synthesize({fx.faces[0].mask, fx.faces[0].mask, fx.entries[0], PortraitStyle::kPhoto}),
                  Error);
}

TEST_CASE("candidate generation") {
  Fixture fx(3);
  const RegionCompositeSynthesizer synth;
  const StrokeSet strokes = add_stroke(StrokeSet{}, {{200, 220}, {230, 210}, {250, 225}, {220, 235}}, 2);

  std::vector<std::string> streamed;
  const CandidateSet set = generate_candidates(strokes, fx.entries, kPalette, synth, {},
                                               [&](const GuidanceCandidate& c) { streamed.push_back(c.candidate_id); });
  REQUIRE(set.candidates.size() == 3);
  CHECK(streamed == std::vector<std::string>{"c1", "c2", "c3"});
  for (int i = 0; i < 3; ++i) {
    const auto& c = set.candidates[i];
    CHECK(c.rank == i + 1);
    CHECK(c.template_entry_id == fx.entries[i].entry_id);
    CHECK(c.portrait.size() == kDefaultCanvas);
    CHECK(std::isfinite(c.template_score));
    for (auto v : c.portrait.cells()) REQUIRE((v == 0 || v == 255));
  }

  const CandidateSet again = generate_candidates(strokes, fx.entries, kPalette, synth);
  for (int i = 0; i < 3; ++i) CHECK(again.candidates[i].portrait == set.candidates[i].portrait);

  const std::vector<DatasetEntry> one{fx.entries[1]};
  CHECK(generate_candidates(strokes, one, kPalette, synth).candidates.size() == 1);

  CandidateOptions photo;
  photo.style = PortraitStyle::kPhoto;
  const CandidateSet blank = generate_candidates(StrokeSet{}, one, kPalette, synth, photo);
  CHECK(std::isnan(blank.candidates[0].template_score));
  CHECK(blank.candidates[0].portrait == blank.candidates[0].photo);
}

TEST_CASE("failing templates are skipped, all failing is an error") {
  Fixture fx(2);
  const RegionCompositeSynthesizer synth;
  std::vector<DatasetEntry> mixed = fx.entries;
  mixed[0].image_path = fx.dir / "missing.png";
  const CandidateSet set = generate_candidates(StrokeSet{}, mixed, kPalette, synth);
  CHECK(set.candidates.size() == 1);
  CHECK(set.candidates[0].candidate_id == "c2");
  CHECK_FALSE(set.warnings.empty());

  mixed[1].mask_path = fx.dir / "missing_mask.png";
  CHECK_THROWS_AS(generate_candidates(StrokeSet{}, mixed, kPalette, synth), Error);
}
