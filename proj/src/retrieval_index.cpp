#include "dualface/retrieval_index.hpp"

#include <algorithm>
#include <cmath>

#include "dualface/binary_io.hpp"
#include "dualface/image_io.hpp"
#include "dualface/random.hpp"

namespace dualface {
namespace {

constexpr char kIndexMagic[] = "DFIDX";
constexpr std::uint32_t kIndexVersion = 1;

double norm(const std::vector<float>& v) {
  double acc = 0.0;
  for (float x : v) acc += static_cast<double>(x) * x;
  return std::sqrt(acc);
}

std::vector<float> to_float(const FeatureHistogram& h) { return {h.bins.begin(), h.bins.end()}; }

SketchRaster load_contour(const DatasetManifest& manifest, const DatasetEntry& entry) {
  try {
    SketchRaster raster = from_gray8(read_gray8(manifest.resolve(entry.contour_path)));
    if (raster.size() != manifest.canvas) throw ValidationError("contour size differs from the manifest canvas");
    return raster;
  } catch (const Error& e) {
    throw IoError("entry '" + entry.entry_id + "': " + e.what());
  }
}

}  // namespace

double cosine_similarity(const std::vector<float>& a, const std::vector<float>& b) {
  const double na = norm(a);
  const double nb = norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  double dot = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += static_cast<double>(a[i]) * b[i];
  return std::clamp(dot / (na * nb), 0.0, 1.0);
}

RetrievalIndex::RetrievalIndex(std::shared_ptr<const Codebook> codebook, GalifParams params, CanvasSize canvas,
                               std::vector<IndexEntry> entries)
    : codebook_(std::move(codebook)),
      encoder_(std::make_shared<GalifEncoder>(params)),
      canvas_(canvas),
      entries_(std::move(entries)) {
  if (!codebook_) throw ValidationError("index needs a codebook");
  if (static_cast<std::size_t>(codebook_->dim()) != encoder_->descriptor_length()) {
    throw ValidationError("codebook word length does not match the GALIF descriptor length");
  }
  codebook_hash_ = codebook_->hash();
  norms_.reserve(entries_.size());
  for (const auto& e : entries_) {
    if (e.histogram.size() != static_cast<std::size_t>(codebook_->k())) {
      throw ValidationError("entry '" + e.entry_id + "' histogram length differs from codebook k");
    }
    norms_.push_back(norm(e.histogram));
  }
}

const IndexEntry* RetrievalIndex::find(std::string_view entry_id) const {
  for (const auto& e : entries_) {
    if (e.entry_id == entry_id) return &e;
  }
  return nullptr;
}

std::vector<RetrievalResult> RetrievalIndex::query(const SketchRaster& raster, int n) const {
  if (raster.size() != canvas_) throw ValidationError("query raster size differs from the index canvas");
  return query_histogram(encoder_->encode(raster, *codebook_), n);
}

std::vector<RetrievalResult> RetrievalIndex::query_histogram(const FeatureHistogram& histogram, int n) const {
  if (n < 1) throw ValidationError("n must be >= 1");
  if (histogram.bins.size() != static_cast<std::size_t>(codebook_->k())) {
    throw ValidationError("query histogram length differs from codebook k");
  }
  if (histogram.blank()) return {};
  const std::vector<float> q = to_float(histogram);
  const double qn = norm(q);
  std::vector<RetrievalResult> all;
  all.reserve(entries_.size());
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    double sim = 0.0;
    if (norms_[i] > 0.0) {
      double dot = 0.0;
      const auto& h = entries_[i].histogram;
      for (std::size_t j = 0; j < q.size(); ++j) dot += static_cast<double>(q[j]) * h[j];
      sim = std::clamp(dot / (qn * norms_[i]), 0.0, 1.0);
    }
    all.push_back({entries_[i].entry_id, sim, 0});
  }
  const std::size_t keep = std::min(static_cast<std::size_t>(n), all.size());
  auto better = [](const RetrievalResult& a, const RetrievalResult& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return a.entry_id < b.entry_id;
  };
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(), better);
  all.resize(keep);
  for (std::size_t i = 0; i < all.size(); ++i) all[i].rank = static_cast<int>(i + 1);
  return all;
}

std::vector<std::uint8_t> RetrievalIndex::serialize() const {
  ByteWriter w;
  w.raw(std::string_view(kIndexMagic, 5));
  w.u32(kIndexVersion);
  w.u64(codebook_hash_);
  w.u32(static_cast<std::uint32_t>(canvas_.width));
  w.u32(static_cast<std::uint32_t>(canvas_.height));
  const auto& p = params();
  w.u32(static_cast<std::uint32_t>(p.bank.num_orientations));
  w.f64(p.bank.wavelength);
  w.f64(p.bank.bandwidth);
  w.u32(static_cast<std::uint32_t>(p.bank.kernel_size));
  w.f64(p.bank.aspect);
  w.u32(static_cast<std::uint32_t>(p.sampling.max_samples));
  w.u32(static_cast<std::uint32_t>(p.sampling.patch));
  w.u32(static_cast<std::uint32_t>(p.sampling.tile));
  w.u64(p.sampling.seed);
  w.u32(static_cast<std::uint32_t>(codebook_->k()));
  w.u32(static_cast<std::uint32_t>(entries_.size()));
  for (const auto& e : entries_) {
    w.str(e.entry_id);
    for (float v : e.histogram) w.f32(v);
  }
  for (const auto& e : entries_) {
    w.str(e.contour_path.generic_string());
    w.str(e.mask_path.generic_string());
    w.str(e.image_path.generic_string());
  }
  return w.bytes();
}

RetrievalIndex RetrievalIndex::deserialize(const std::vector<std::uint8_t>& bytes,
                                           std::shared_ptr<const Codebook> codebook) {
  if (!codebook) throw ValidationError("index needs a codebook");
  ByteReader r(bytes, "index");
  if (r.raw(5) != std::string_view(kIndexMagic, 5)) throw ParseError("index: bad magic (expected DFIDX)");
  const std::uint32_t version = r.u32();
  if (version != kIndexVersion) throw ParseError("index: unsupported format version " + std::to_string(version));
  const std::uint64_t stored_hash = r.u64();
  if (stored_hash != codebook->hash()) {
    throw ValidationError("index was built with codebook " + hex64(stored_hash) + " but codebook " +
                          hex64(codebook->hash()) + " was supplied");
  }
  CanvasSize canvas;
  canvas.width = static_cast<int>(r.u32());
  canvas.height = static_cast<int>(r.u32());
  GalifParams p;
  p.bank.num_orientations = static_cast<int>(r.u32());
  p.bank.wavelength = r.f64();
  p.bank.bandwidth = r.f64();
  p.bank.kernel_size = static_cast<int>(r.u32());
  p.bank.aspect = r.f64();
  p.sampling.max_samples = static_cast<int>(r.u32());
  p.sampling.patch = static_cast<int>(r.u32());
  p.sampling.tile = static_cast<int>(r.u32());
  p.sampling.seed = r.u64();
  const std::uint32_t k = r.u32();
  if (k != static_cast<std::uint32_t>(codebook->k())) throw ParseError("index: histogram length differs from codebook");
  const std::uint32_t count = r.u32();
  if (count > r.remaining()) throw ParseError("index: file is truncated");
  std::vector<IndexEntry> entries(count);
  for (auto& e : entries) {
    e.entry_id = r.str();
    if (static_cast<std::uint64_t>(k) * 4 > r.remaining()) throw ParseError("index: file is truncated");
    e.histogram.resize(k);
    for (auto& v : e.histogram) v = r.f32();
  }
  for (auto& e : entries) {
    e.contour_path = r.str();
    e.mask_path = r.str();
    e.image_path = r.str();
  }
  if (!r.at_end()) throw ParseError("index: trailing bytes");
  try {
    return RetrievalIndex(std::move(codebook), p, canvas, std::move(entries));
  } catch (const ValidationError& e) {
    throw ParseError(std::string("index: ") + e.what());
  }
}

RetrievalIndex build_index(const DatasetManifest& manifest, std::shared_ptr<const Codebook> codebook,
                           const GalifParams& params, const std::function<void(const IndexBuildProgress&)>& progress) {
  if (manifest.entries.empty()) throw ValidationError("cannot build an index from an empty manifest");
  if (!codebook) throw ValidationError("index needs a codebook");
  const GalifEncoder encoder(params);
  std::vector<IndexEntry> entries;
  entries.reserve(manifest.entries.size());
  for (const auto& entry : manifest.entries) {
    const SketchRaster contour = load_contour(manifest, entry);
    const FeatureHistogram hist = encoder.encode(contour, *codebook);
    const DatasetEntry abs = manifest.resolved(entry);
    entries.push_back({entry.entry_id, to_float(hist), std::filesystem::absolute(abs.contour_path).lexically_normal(),
                       std::filesystem::absolute(abs.mask_path).lexically_normal(),
                       std::filesystem::absolute(abs.image_path).lexically_normal()});
    if (progress) progress({entries.size(), manifest.entries.size()});
  }
  return RetrievalIndex(std::move(codebook), params, manifest.canvas, std::move(entries));
}

void save_index(const RetrievalIndex& index, const std::filesystem::path& path) {
  write_file_bytes(path, index.serialize());
}

RetrievalIndex load_index(const std::filesystem::path& path, std::shared_ptr<const Codebook> codebook) {
  return RetrievalIndex::deserialize(read_file_bytes(path), std::move(codebook));
}

std::vector<LocalDescriptor> pool_corpus_descriptors(const DatasetManifest& manifest, const GalifParams& params,
                                                     std::size_t max_per_entry) {
  const GalifEncoder encoder(params);
  std::vector<LocalDescriptor> pooled;
  Rng rng(params.sampling.seed ^ 0x9e3779b97f4a7c15ULL);
  for (const auto& entry : manifest.entries) {
    auto descriptors = encoder.describe(load_contour(manifest, entry));
    if (max_per_entry > 0 && descriptors.size() > max_per_entry) {
      for (std::size_t i = 0; i < max_per_entry; ++i) {
        std::swap(descriptors[i], descriptors[i + rng.below(descriptors.size() - i)]);
      }
      descriptors.resize(max_per_entry);
    }
    std::move(descriptors.begin(), descriptors.end(), std::back_inserter(pooled));
  }
  return pooled;
}

std::uint64_t corpus_hash(const DatasetManifest& manifest) {
  Fnv1a h;
  for (const auto& entry : manifest.entries) {
    h.update(entry.entry_id);
    h.update(read_file_bytes(manifest.resolve(entry.contour_path)));
  }
  return h.digest();
}

}  // namespace dualface
