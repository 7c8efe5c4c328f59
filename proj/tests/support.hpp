#pragma once

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <numbers>
#include <fstream>
#include <memory>
#include <string>

#include "dualface/galif.hpp"
#include "dualface/guidance_service.hpp"
#include "dualface/mask_pipeline.hpp"
#include "dualface/random.hpp"
#include "dualface/retrieval_index.hpp"
#include "dualface/synthetic_faces.hpp"

namespace testing {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    std::string tmpl = (fs::temp_directory_path() / "dualface-test-XXXXXX").string();
    if (!::mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream(path, std::ios::binary) << text;
}

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

// Synthetic corpus run through the library pipeline: dataset, codebook, index.
struct MiniCorpus {
  fs::path root;
  fs::path manifest_path;
  fs::path codebook_path;
  fs::path index_path;
  dualface::DatasetManifest manifest;
  std::shared_ptr<const dualface::Codebook> codebook;
  std::shared_ptr<const dualface::RetrievalIndex> index;
};

inline MiniCorpus build_mini_corpus(const fs::path& root, std::size_t count, int k = 32, std::uint64_t seed = 11,
                                    std::size_t per_entry = 80) {
  using namespace dualface;
  MiniCorpus c;
  c.root = root;
  const CorpusLayout layout = write_synthetic_corpus(root / "corpus", count, seed);
  DatasetBuildReport report =
      build_dataset(layout.mask_dir, layout.image_dir, root / "dataset", load_palette(layout.palette_path));
  c.manifest_path = root / "dataset" / "manifest.json";
  c.manifest = load_manifest(c.manifest_path);
  GalifParams params;
  const auto pool = pool_corpus_descriptors(c.manifest, params, per_entry);
  c.codebook = std::make_shared<const Codebook>(train_codebook(pool, k, seed, {}, corpus_hash(c.manifest)));
  c.codebook_path = root / "codebook.bin";
  save_codebook(*c.codebook, c.codebook_path);
  c.index = std::make_shared<const RetrievalIndex>(build_index(c.manifest, c.codebook, params));
  c.index_path = root / "index.bin";
  save_index(*c.index, c.index_path);
  return c;
}

// Random label grid over `labels` drawn as a few axis-aligned blobs on background.
inline dualface::LabelMask random_blob_mask(dualface::Rng& rng, int w, int h, const std::vector<dualface::LabelId>& labels,
                                            int blobs) {
  using namespace dualface;
  Grid<LabelId> g(w, h, kBackgroundLabel);
  for (int b = 0; b < blobs; ++b) {
    const LabelId k = labels[rng.below(labels.size())];
    const int x0 = static_cast<int>(rng.below(w));
    const int y0 = static_cast<int>(rng.below(h));
    const int bw = 1 + static_cast<int>(rng.below(std::max(1, w / 3)));
    const int bh = 1 + static_cast<int>(rng.below(std::max(1, h / 3)));
    for (int y = y0; y < std::min(h, y0 + bh); ++y) {
      for (int x = x0; x < std::min(w, x0 + bw); ++x) g.at(x, y) = k;
    }
  }
  return LabelMask(std::move(g), Palette::celebamask_hq());
}

inline std::vector<dualface::Vertex> ellipse(dualface::Vertex c, double rx, double ry, int n) {
  std::vector<dualface::Vertex> pts;
  for (int i = 0; i <= n; ++i) {
    const double t = 2 * std::numbers::pi * i / n;
    pts.push_back({c.x + rx * std::cos(t), c.y + ry * std::sin(t)});
  }
  return pts;
}

// Rough frontal face: outline, two eyes and a mouth.
inline dualface::StrokeSet face_sketch(double dx = 0, double dy = 0) {
  using namespace dualface;
  StrokeSet s;
  s = add_stroke(s, ellipse({256 + dx, 270 + dy}, 140, 170, 40), 3);
  s = add_stroke(s, ellipse({201 + dx, 230 + dy}, 20, 9, 12), 3);
  s = add_stroke(s, ellipse({311 + dx, 230 + dy}, 20, 9, 12), 3);
  s = add_stroke(s, {{220 + dx, 345 + dy}, {256 + dx, 352 + dy}, {292 + dx, 345 + dy}}, 3);
  return s;
}

inline std::shared_ptr<dualface::GuidanceEngine> make_engine(const MiniCorpus& c,
                                                             dualface::GuidanceEngine::Options options = {}) {
  using namespace dualface;
  return std::make_shared<GuidanceEngine>(c.index, c.manifest.palette,
                                          std::make_shared<const RegionCompositeSynthesizer>(), options);
}

}  // namespace testing
