#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include "dualface/common.hpp"

namespace dualface {

// Gabor Local Line-based Feature (GALIF) pipeline: oriented Gabor responses, tiled local
// descriptors around ink pixels, and bag-of-features histograms against a learned codebook.

struct GaborBankParams {
  int num_orientations = 6;
  double wavelength = 8.0;  // pixels
  double bandwidth = 1.0;   // octaves; sets the Gaussian envelope width
  int kernel_size = 31;     // odd
  double aspect = 0.5;      // envelope aspect (along-line / across-line frequency ratio)

  void validate() const;
  double sigma() const;
  friend bool operator==(const GaborBankParams&, const GaborBankParams&) = default;
};

// One complex kernel. `angle_deg` is the direction of the lines it responds to, measured
// counter-clockwise on screen from the +x axis (so image rows grow toward -90 degrees).
struct GaborKernel {
  double angle_deg = 0.0;
  Grid<double> real;
  Grid<double> imag;
};

struct GaborBank {
  GaborBankParams params;
  std::vector<GaborKernel> kernels;
};

GaborBank make_gabor_bank(const GaborBankParams& params);

// One non-negative magnitude map per orientation, reflective borders.
using ResponseMaps = std::vector<Grid<float>>;

// Kernel spectra for one image size. Each orientation costs a single complex inverse DFT
// because the complex kernel yields the even and odd responses together.
class SpectralBank {
 public:
  SpectralBank(const GaborBank& bank, CanvasSize size);
  ~SpectralBank();
  SpectralBank(SpectralBank&&) noexcept;
  SpectralBank& operator=(SpectralBank&&) noexcept;

  CanvasSize size() const { return size_; }
  ResponseMaps apply(const Grid<float>& image) const;

 private:
  struct Impl;
  CanvasSize size_;
  std::unique_ptr<Impl> impl_;
};

ResponseMaps response_maps(const Grid<float>& image, const GaborBank& bank);
ResponseMaps response_maps(const SketchRaster& raster, const GaborBank& bank);

struct SamplingParams {
  int max_samples = 500;
  int patch = 64;  // pixels
  int tile = 4;    // cells per patch side
  std::uint64_t seed = 0x6a1f66d;

  void validate(CanvasSize canvas) const;
  friend bool operator==(const SamplingParams&, const SamplingParams&) = default;
};

struct LocalDescriptor {
  std::vector<float> values;  // [cell_y][cell_x][orientation], L2-normalized unless all zero
  Vertex position;
};

std::vector<LocalDescriptor> sample_local_features(const ResponseMaps& maps, const SketchRaster& raster,
                                                   const SamplingParams& params);

struct FeatureHistogram {
  std::vector<double> bins;

  bool blank() const;
};

class Codebook {
 public:
  Codebook() = default;
  Codebook(int k, int dim, std::vector<float> words, std::uint64_t training_seed, std::uint64_t corpus_hash);

  int k() const { return k_; }
  int dim() const { return dim_; }
  std::span<const float> word(int i) const { return std::span<const float>(words_).subspan(std::size_t(i) * dim_, dim_); }
  const std::vector<float>& words() const { return words_; }
  std::uint64_t training_seed() const { return training_seed_; }
  std::uint64_t corpus_hash() const { return corpus_hash_; }

  // Nearest word by squared L2; ties resolve to the lowest index.
  int nearest(std::span<const float> descriptor) const;

  std::vector<std::uint8_t> serialize() const;
  static Codebook deserialize(const std::vector<std::uint8_t>& bytes);
  // FNV-1a of the serialized form; stored in indices for compatibility checks.
  std::uint64_t hash() const;

  friend bool operator==(const Codebook&, const Codebook&) = default;

 private:
  int k_ = 0;
  int dim_ = 0;
  std::vector<float> words_;
  std::uint64_t training_seed_ = 0;
  std::uint64_t corpus_hash_ = 0;
};

void save_codebook(const Codebook& codebook, const std::filesystem::path& path);
Codebook load_codebook(const std::filesystem::path& path);

struct CodebookTrainingOptions {
  int max_iterations = 20;
  std::size_t max_training_descriptors = 20000;  // seeded subsample above this
};

// Seeded k-means++ initialization followed by Lloyd refinement.
Codebook train_codebook(std::span<const LocalDescriptor> descriptors, int k, std::uint64_t seed,
                        const CodebookTrainingOptions& options = {}, std::uint64_t corpus_hash = 0);

FeatureHistogram encode_histogram(std::span<const LocalDescriptor> descriptors, const Codebook& codebook);

struct GalifParams {
  GaborBankParams bank;
  SamplingParams sampling;
  friend bool operator==(const GalifParams&, const GalifParams&) = default;
};

// Holds the filter bank so repeated encodes share it.
class GalifEncoder {
 public:
  explicit GalifEncoder(GalifParams params = {});

  const GalifParams& params() const { return params_; }
  const GaborBank& bank() const { return bank_; }
  std::size_t descriptor_length() const;

  ResponseMaps responses(const SketchRaster& raster) const;
  std::vector<LocalDescriptor> describe(const SketchRaster& raster) const;
  FeatureHistogram encode(const SketchRaster& raster, const Codebook& codebook) const;

 private:
  const SpectralBank& spectral(CanvasSize size) const;

  GalifParams params_;
  GaborBank bank_;
  mutable std::mutex cache_mutex_;
  mutable std::vector<std::unique_ptr<SpectralBank>> cache_;
};

}  // namespace dualface
