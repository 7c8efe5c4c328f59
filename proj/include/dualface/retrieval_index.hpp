#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dualface/galif.hpp"
#include "dualface/mask_pipeline.hpp"

namespace dualface {

struct IndexEntry {
  std::string entry_id;
  std::vector<float> histogram;  // length == codebook k
  // Absolute paths captured from the manifest at build time.
  std::filesystem::path contour_path;
  std::filesystem::path mask_path;
  std::filesystem::path image_path;

  DatasetEntry dataset_entry() const { return {entry_id, contour_path, mask_path, image_path}; }
};

struct RetrievalResult {
  std::string entry_id;
  double similarity = 0.0;  // cosine in [0, 1]
  int rank = 0;             // 1-based

  friend bool operator==(const RetrievalResult&, const RetrievalResult&) = default;
};

// Cosine similarity between non-negative histograms; 0 when either side is blank.
double cosine_similarity(const std::vector<float>& a, const std::vector<float>& b);

// Linear-scan index. Immutable after construction; queries are safe from many threads.
class RetrievalIndex {
 public:
  RetrievalIndex(std::shared_ptr<const Codebook> codebook, GalifParams params, CanvasSize canvas,
                 std::vector<IndexEntry> entries);

  const std::vector<IndexEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  const GalifParams& params() const { return encoder_->params(); }
  const GalifEncoder& encoder() const { return *encoder_; }
  const Codebook& codebook() const { return *codebook_; }
  std::uint64_t codebook_hash() const { return codebook_hash_; }
  CanvasSize canvas() const { return canvas_; }
  const IndexEntry* find(std::string_view entry_id) const;

  // Top min(n, size) entries by cosine similarity, ties by ascending entry id. Blank query -> empty.
  std::vector<RetrievalResult> query(const SketchRaster& raster, int n) const;
  std::vector<RetrievalResult> query_histogram(const FeatureHistogram& histogram, int n) const;

  std::vector<std::uint8_t> serialize() const;
  // `codebook` must hash to the value recorded in the file.
  static RetrievalIndex deserialize(const std::vector<std::uint8_t>& bytes, std::shared_ptr<const Codebook> codebook);

 private:
  std::shared_ptr<const Codebook> codebook_;
  std::uint64_t codebook_hash_ = 0;
  std::shared_ptr<const GalifEncoder> encoder_;
  CanvasSize canvas_;
  std::vector<IndexEntry> entries_;
  std::vector<double> norms_;
};

struct IndexBuildProgress {
  std::size_t done = 0;
  std::size_t total = 0;
};

RetrievalIndex build_index(const DatasetManifest& manifest, std::shared_ptr<const Codebook> codebook,
                           const GalifParams& params,
                           const std::function<void(const IndexBuildProgress&)>& progress = {});

void save_index(const RetrievalIndex& index, const std::filesystem::path& path);
RetrievalIndex load_index(const std::filesystem::path& path, std::shared_ptr<const Codebook> codebook);

// Pools GALIF descriptors over every manifest contour (for codebook training).
std::vector<LocalDescriptor> pool_corpus_descriptors(const DatasetManifest& manifest, const GalifParams& params,
                                                     std::size_t max_per_entry = 0);

// Hash of the manifest's entry ids and contour bytes; recorded in codebooks.
std::uint64_t corpus_hash(const DatasetManifest& manifest);

}  // namespace dualface
