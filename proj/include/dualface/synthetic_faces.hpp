#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <vector>

#include "dualface/mask_pipeline.hpp"
#include "dualface/random.hpp"

namespace dualface {

// Parametric frontal face laid out in CelebAMask-HQ label ids. Lengths in pixels.
struct FaceParams {
  double cx = 256.0;  // face ellipse centre
  double cy = 270.0;
  double face_rx = 140.0;
  double face_ry = 170.0;
  double eye_dx = 55.0;  // horizontal offset of each eye from cx
  double eye_dy = 40.0;  // eyes sit this far above cy
  double eye_rx = 20.0;
  double eye_ry = 9.0;
  double brow_gap = 22.0;
  double nose_length = 30.0;
  double mouth_dy = 75.0;
  double mouth_rx = 38.0;
  double hair_height = 0.3;  // fraction of face_ry the hairline sits above cy
  bool cloth = true;
  // Overrides for one eye only (e.g. a displaced-eye fixture). NaN = follow the symmetric layout.
  double left_eye_x = std::numeric_limits<double>::quiet_NaN();
  double left_eye_y = std::numeric_limits<double>::quiet_NaN();
  std::uint8_t skin_tone = 175;
  std::uint8_t hair_tone = 70;
};

FaceParams random_face_params(Rng& rng, CanvasSize canvas = kDefaultCanvas);

struct SyntheticFace {
  LabelMask mask;
  GrayImage image;
};

// Deterministic for equal params and seed (the seed only drives pixel noise).
SyntheticFace render_face(const FaceParams& params, CanvasSize canvas = kDefaultCanvas, std::uint64_t noise_seed = 0);

// Centre of the image-left eye ("l_eye") for these params.
Vertex left_eye_center(const FaceParams& params);

struct CorpusLayout {
  std::filesystem::path mask_dir;
  std::filesystem::path image_dir;
  std::filesystem::path palette_path;
};

// Writes `<out>/masks/face_NNNN.png`, `<out>/images/face_NNNN.png` and `<out>/palette.json`.
CorpusLayout write_synthetic_corpus(const std::filesystem::path& out_dir, std::size_t count, std::uint64_t seed,
                                    CanvasSize canvas = kDefaultCanvas);

}  // namespace dualface
