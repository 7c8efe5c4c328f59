#include "dualface/synthetic_faces.hpp"

#include <cmath>
#include <cstdio>

#include "dualface/image_io.hpp"

namespace dualface {
namespace {

namespace label {
constexpr LabelId kSkin = 1, kNose = 2, kLeftEye = 4, kRightEye = 5, kLeftBrow = 6, kRightBrow = 7, kLeftEar = 8,
                  kRightEar = 9, kMouth = 10, kUpperLip = 11, kLowerLip = 12, kHair = 13, kNeck = 17, kCloth = 18;
}

bool in_ellipse(double x, double y, double cx, double cy, double rx, double ry) {
  const double dx = (x - cx) / rx;
  const double dy = (y - cy) / ry;
  return dx * dx + dy * dy <= 1.0;
}

struct Canvas {
  Grid<LabelId> labels;
  Grid<int> tones;

  template <typename Pred>
  void paint(LabelId k, int tone, Pred inside) {
    for (int y = 0; y < labels.height(); ++y) {
      for (int x = 0; x < labels.width(); ++x) {
        if (inside(double(x), double(y))) {
          labels.at(x, y) = k;
          tones.at(x, y) = tone;
        }
      }
    }
  }
};

}  // namespace

FaceParams random_face_params(Rng& rng, CanvasSize canvas) {
  const double s = canvas.width / 512.0;
  FaceParams p;
  p.cx = canvas.width / 2.0 + rng.uniform(-18, 18) * s;
  p.cy = canvas.height * 0.53 + rng.uniform(-16, 16) * s;
  p.face_rx = rng.uniform(118, 156) * s;
  p.face_ry = rng.uniform(150, 188) * s;
  p.eye_dx = rng.uniform(0.34, 0.44) * p.face_rx;
  p.eye_dy = rng.uniform(0.16, 0.30) * p.face_ry;
  p.eye_rx = rng.uniform(15, 24) * s;
  p.eye_ry = rng.uniform(7, 11) * s;
  p.brow_gap = rng.uniform(18, 28) * s;
  p.nose_length = rng.uniform(24, 40) * s;
  p.mouth_dy = rng.uniform(0.38, 0.52) * p.face_ry;
  p.mouth_rx = rng.uniform(28, 48) * s;
  p.hair_height = rng.uniform(0.0, 1.0);
  p.cloth = rng.below(4) != 0;
  p.skin_tone = static_cast<std::uint8_t>(150 + rng.below(40));
  p.hair_tone = static_cast<std::uint8_t>(60 + rng.below(60));
  return p;
}

Vertex left_eye_center(const FaceParams& p) {
  const double x = std::isnan(p.left_eye_x) ? p.cx - p.eye_dx : p.left_eye_x;
  const double y = std::isnan(p.left_eye_y) ? p.cy - p.eye_dy : p.left_eye_y;
  return {x, y};
}

SyntheticFace render_face(const FaceParams& p, CanvasSize canvas, std::uint64_t noise_seed) {
  Canvas c{Grid<LabelId>(canvas, kBackgroundLabel), Grid<int>(canvas, 246)};
  const double neck_top = p.cy + 0.6 * p.face_ry;
  const double neck_half = 0.42 * p.face_rx;
  const double shoulders = p.cy + p.face_ry + 25.0;

  if (p.cloth) {
    c.paint(label::kCloth, 110, [&](double x, double y) {
      return y >= shoulders && std::abs(x - p.cx) <= neck_half + 1.2 * (y - shoulders) + 30.0;
    });
  }
  c.paint(label::kNeck, p.skin_tone - 15, [&](double x, double y) {
    return y >= neck_top && std::abs(x - p.cx) <= neck_half && !(p.cloth && c.labels.at(int(x), int(y)) == label::kCloth);
  });
  const double hair_rx = p.face_rx + 22.0;
  const double hair_ry = p.face_ry + 24.0;
  const double hair_cy = p.cy - 8.0;
  c.paint(label::kHair, p.hair_tone, [&](double x, double y) {
    return in_ellipse(x, y, p.cx, hair_cy, hair_rx, hair_ry) && y < p.cy - 0.1 * p.face_ry;
  });
  for (int side : {-1, 1}) {
    c.paint(side < 0 ? label::kLeftEar : label::kRightEar, p.skin_tone - 10, [&](double x, double y) {
      return in_ellipse(x, y, p.cx + side * p.face_rx, p.cy - 0.05 * p.face_ry, 0.12 * p.face_rx, 0.18 * p.face_ry);
    });
  }
  c.paint(label::kSkin, p.skin_tone, [&](double x, double y) { return in_ellipse(x, y, p.cx, p.cy, p.face_rx, p.face_ry); });
  const double hairline = p.cy - p.face_ry * (0.62 + 0.2 * p.hair_height);
  c.paint(label::kHair, p.hair_tone, [&](double x, double y) {
    return y < hairline && in_ellipse(x, y, p.cx, p.cy, p.face_rx, p.face_ry);
  });

  c.paint(label::kNose, p.skin_tone - 18, [&](double x, double y) {
    return in_ellipse(x, y, p.cx, p.cy + 0.1 * p.face_ry - p.nose_length * 0.2, 0.1 * p.face_rx + 2.0, p.nose_length);
  });

  const Vertex left = left_eye_center(p);
  const Vertex right{p.cx + p.eye_dx, p.cy - p.eye_dy};
  for (const auto& [eye, brow_label] : {std::pair{left, label::kLeftBrow}, std::pair{right, label::kRightBrow}}) {
    c.paint(brow_label, 55, [&](double x, double y) {
      return in_ellipse(x, y, eye.x, eye.y - p.brow_gap, p.eye_rx * 1.25, 4.5);
    });
  }
  for (const auto& [eye, eye_label] : {std::pair{left, label::kLeftEye}, std::pair{right, label::kRightEye}}) {
    c.paint(eye_label, 240, [&](double x, double y) { return in_ellipse(x, y, eye.x, eye.y, p.eye_rx, p.eye_ry); });
    const double pupil = std::max(2.0, p.eye_ry - 2.0);
    for (int y = 0; y < canvas.height; ++y) {
      for (int x = 0; x < canvas.width; ++x) {
        if (c.labels.at(x, y) == eye_label && in_ellipse(x, y, eye.x, eye.y, pupil, pupil)) c.tones.at(x, y) = 25;
      }
    }
  }

  const double my = p.cy + p.mouth_dy;
  c.paint(label::kUpperLip, 125, [&](double x, double y) { return y < my && in_ellipse(x, y, p.cx, my, p.mouth_rx, 10.0); });
  c.paint(label::kLowerLip, 135, [&](double x, double y) {
    return y >= my && in_ellipse(x, y, p.cx, my, p.mouth_rx * 0.92, 13.0);
  });
  c.paint(label::kMouth, 65, [&](double x, double y) { return in_ellipse(x, y, p.cx, my, p.mouth_rx * 0.8, 2.5); });

  Rng noise(noise_seed);
  GrayImage image(canvas);
  auto tones = c.tones.cells();
  auto dst = image.cells();
  for (std::size_t i = 0; i < tones.size(); ++i) {
    const int v = tones[i] + static_cast<int>(noise.below(7)) - 3;
    dst[i] = static_cast<std::uint8_t>(std::clamp(v, 0, 255));
  }
  return {LabelMask(std::move(c.labels), Palette::celebamask_hq()), std::move(image)};
}

CorpusLayout write_synthetic_corpus(const std::filesystem::path& out_dir, std::size_t count, std::uint64_t seed,
                                    CanvasSize canvas) {
  CorpusLayout layout{out_dir / "masks", out_dir / "images", out_dir / "palette.json"};
  std::filesystem::create_directories(layout.mask_dir);
  std::filesystem::create_directories(layout.image_dir);
  Rng rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    const FaceParams params = random_face_params(rng, canvas);
    const SyntheticFace face = render_face(params, canvas, rng.next());
    char name[32];
    std::snprintf(name, sizeof name, "face_%04zu.png", i);
    write_gray8(layout.mask_dir / name, face.mask.labels());
    write_gray8(layout.image_dir / name, face.image);
  }
  const std::string palette = Palette::celebamask_hq().to_text();
  std::FILE* f = std::fopen(layout.palette_path.c_str(), "wb");
  if (!f) throw IoError("cannot write " + layout.palette_path.string());
  std::fwrite(palette.data(), 1, palette.size(), f);
  std::fclose(f);
  return layout;
}

}  // namespace dualface
