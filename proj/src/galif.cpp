#include "dualface/galif.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include <opencv2/imgproc.hpp>

#include "dualface/binary_io.hpp"
#include "dualface/random.hpp"

namespace dualface {

void GaborBankParams::validate() const {
  if (num_orientations < 2) throw ValidationError("gabor bank needs at least 2 orientations");
  if (kernel_size < 3 || kernel_size % 2 == 0) throw ValidationError("gabor kernel size must be odd and >= 3");
  if (!(wavelength >= 2.0) || !std::isfinite(wavelength)) throw ValidationError("gabor wavelength must be >= 2 px");
  if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) throw ValidationError("gabor bandwidth must be positive");
  if (!(aspect > 0.0) || !std::isfinite(aspect)) throw ValidationError("gabor aspect must be positive");
}

double GaborBankParams::sigma() const {
  const double octave = std::pow(2.0, bandwidth);
  return wavelength / std::numbers::pi * std::sqrt(std::log(2.0) / 2.0) * (octave + 1.0) / (octave - 1.0);
}

GaborBank make_gabor_bank(const GaborBankParams& params) {
  params.validate();
  GaborBank bank{params, {}};
  const int half = params.kernel_size / 2;
  const double sigma = params.sigma();
  const double gamma2 = params.aspect * params.aspect;
  for (int i = 0; i < params.num_orientations; ++i) {
    GaborKernel kernel;
    kernel.angle_deg = 180.0 * i / params.num_orientations;
    kernel.real = Grid<double>(params.kernel_size, params.kernel_size);
    kernel.imag = Grid<double>(params.kernel_size, params.kernel_size);
    const double theta = kernel.angle_deg * std::numbers::pi / 180.0;
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    for (int y = -half; y <= half; ++y) {
      for (int x = -half; x <= half; ++x) {
        const double along = x * c - y * s;
        const double across = x * s + y * c;
        const double envelope = std::exp(-(across * across + gamma2 * along * along) / (2.0 * sigma * sigma));
        const double phase = 2.0 * std::numbers::pi * across / params.wavelength;
        kernel.real.at(x + half, y + half) = envelope * std::cos(phase);
        kernel.imag.at(x + half, y + half) = envelope * std::sin(phase);
      }
    }
    for (Grid<double>* part : {&kernel.real, &kernel.imag}) {
      auto cells = part->cells();
      const double mean = std::accumulate(cells.begin(), cells.end(), 0.0) / static_cast<double>(cells.size());
      for (auto& v : cells) v -= mean;
    }
    double energy = 0.0;
    for (auto v : kernel.real.cells()) energy += v * v;
    for (auto v : kernel.imag.cells()) energy += v * v;
    const double scale = 1.0 / std::sqrt(energy);
    for (auto& v : kernel.real.cells()) v *= scale;
    for (auto& v : kernel.imag.cells()) v *= scale;
    bank.kernels.push_back(std::move(kernel));
  }
  return bank;
}

struct SpectralBank::Impl {
  int pad = 0;
  int dft_w = 0;
  int dft_h = 0;
  std::vector<cv::Mat> spectra;  // CV_64FC2, one per orientation
};

SpectralBank::SpectralBank(const GaborBank& bank, CanvasSize size) : size_(size), impl_(std::make_unique<Impl>()) {
  const int ksize = bank.params.kernel_size;
  impl_->pad = ksize / 2;
  impl_->dft_w = cv::getOptimalDFTSize(size.width + 2 * impl_->pad);
  impl_->dft_h = cv::getOptimalDFTSize(size.height + 2 * impl_->pad);
  for (const auto& kernel : bank.kernels) {
    // Kernel centred on the origin with wrap-around so the product yields a centred response.
    cv::Mat k = cv::Mat::zeros(impl_->dft_h, impl_->dft_w, CV_64FC2);
    const int half = ksize / 2;
    for (int y = 0; y < ksize; ++y) {
      for (int x = 0; x < ksize; ++x) {
        const int wx = (x - half + impl_->dft_w) % impl_->dft_w;
        const int wy = (y - half + impl_->dft_h) % impl_->dft_h;
        k.at<cv::Vec2d>(wy, wx) = cv::Vec2d(kernel.real.at(x, y), kernel.imag.at(x, y));
      }
    }
    cv::Mat spectrum;
    cv::dft(k, spectrum, cv::DFT_COMPLEX_OUTPUT);
    impl_->spectra.push_back(std::move(spectrum));
  }
}

SpectralBank::~SpectralBank() = default;
SpectralBank::SpectralBank(SpectralBank&&) noexcept = default;
SpectralBank& SpectralBank::operator=(SpectralBank&&) noexcept = default;

ResponseMaps SpectralBank::apply(const Grid<float>& image) const {
  if (image.size() != size_) throw ValidationError("image size does not match the spectral bank");
  ResponseMaps maps;
  maps.reserve(impl_->spectra.size());
  bool blank = true;
  cv::Mat src(image.height(), image.width(), CV_64F);
  for (int y = 0; y < image.height(); ++y) {
    auto row = image.row(y);
    auto* dst = src.ptr<double>(y);
    for (int x = 0; x < image.width(); ++x) {
      dst[x] = row[x];
      blank = blank && row[x] == 0.0f;
    }
  }
  if (blank) {
    maps.assign(impl_->spectra.size(), Grid<float>(image.size(), 0.0f));
    return maps;
  }
  // Reflect-pad so circular wrap-around only touches the padding.
  const int pad = impl_->pad;
  cv::Mat padded;
  cv::copyMakeBorder(src, padded, pad, impl_->dft_h - image.height() - pad, pad, impl_->dft_w - image.width() - pad,
                     cv::BORDER_REFLECT);
  cv::Mat image_spectrum;
  cv::dft(padded, image_spectrum, cv::DFT_COMPLEX_OUTPUT);
  cv::Mat product;
  cv::Mat response;
  for (const auto& spectrum : impl_->spectra) {
    cv::mulSpectrums(image_spectrum, spectrum, product, 0);
    cv::idft(product, response, cv::DFT_SCALE | cv::DFT_COMPLEX_OUTPUT);
    Grid<float> map(image.size());
    for (int y = 0; y < image.height(); ++y) {
      const auto* r = response.ptr<cv::Vec2d>(y + pad) + pad;
      auto out = map.row(y);
      for (int x = 0; x < image.width(); ++x) {
        out[x] = static_cast<float>(std::sqrt(r[x][0] * r[x][0] + r[x][1] * r[x][1]));
      }
    }
    maps.push_back(std::move(map));
  }
  return maps;
}

ResponseMaps response_maps(const Grid<float>& image, const GaborBank& bank) {
  return SpectralBank(bank, image.size()).apply(image);
}

ResponseMaps response_maps(const SketchRaster& raster, const GaborBank& bank) {
  Grid<float> image(raster.size());
  auto src = raster.cells();
  auto dst = image.cells();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] ? 1.0f : 0.0f;
  return response_maps(image, bank);
}

void SamplingParams::validate(CanvasSize canvas) const {
  if (max_samples < 1) throw ValidationError("max_samples must be >= 1");
  if (tile < 1) throw ValidationError("tile must be >= 1");
  if (patch < tile || patch >= std::min(canvas.width, canvas.height)) {
    throw ValidationError("patch must be at least `tile` and smaller than the canvas");
  }
}

namespace {

// Summed-area table with a zero guard row/column.
class IntegralImage {
 public:
  explicit IntegralImage(const Grid<float>& map) : w_(map.width() + 1), sums_((map.width() + 1) * (map.height() + 1), 0.0) {
    for (int y = 0; y < map.height(); ++y) {
      double row_sum = 0.0;
      auto row = map.row(y);
      for (int x = 0; x < map.width(); ++x) {
        row_sum += row[x];
        sums_[(y + 1) * w_ + x + 1] = sums_[y * w_ + x + 1] + row_sum;
      }
    }
  }
  // Sum over [x0, x1) x [y0, y1).
  double sum(int x0, int y0, int x1, int y1) const {
    return sums_[y1 * w_ + x1] - sums_[y0 * w_ + x1] - sums_[y1 * w_ + x0] + sums_[y0 * w_ + x0];
  }

 private:
  int w_;
  std::vector<double> sums_;
};

}  // namespace

std::vector<LocalDescriptor> sample_local_features(const ResponseMaps& maps, const SketchRaster& raster,
                                                   const SamplingParams& params) {
  params.validate(raster.size());
  std::vector<std::pair<int, int>> ink;
  for (int y = 0; y < raster.height(); ++y) {
    for (int x = 0; x < raster.width(); ++x) {
      if (raster.at(x, y)) ink.emplace_back(x, y);
    }
  }
  if (ink.empty()) return {};

  std::vector<std::pair<int, int>> centers;
  if (ink.size() <= static_cast<std::size_t>(params.max_samples)) {
    centers = ink;
  } else {
    // Partial Fisher-Yates: the first max_samples slots become a uniform sample without replacement.
    Rng rng(params.seed);
    for (std::size_t i = 0; i < static_cast<std::size_t>(params.max_samples); ++i) {
      const std::size_t j = i + rng.below(ink.size() - i);
      std::swap(ink[i], ink[j]);
    }
    centers.assign(ink.begin(), ink.begin() + params.max_samples);
  }

  std::vector<IntegralImage> integrals;
  integrals.reserve(maps.size());
  for (const auto& m : maps) integrals.emplace_back(m);

  const int w = raster.width();
  const int h = raster.height();
  const int orientations = static_cast<int>(maps.size());
  const int cell = params.patch / params.tile;
  std::vector<LocalDescriptor> out;
  out.reserve(centers.size());
  for (auto [cx, cy] : centers) {
    LocalDescriptor d;
    d.position = {static_cast<double>(cx), static_cast<double>(cy)};
    d.values.assign(static_cast<std::size_t>(params.tile) * params.tile * orientations, 0.0f);
    const int left = cx - params.patch / 2;
    const int top = cy - params.patch / 2;
    double norm2 = 0.0;
    for (int ty = 0; ty < params.tile; ++ty) {
      const int y0 = std::clamp(top + ty * cell, 0, h);
      const int y1 = std::clamp(top + (ty + 1) * cell, 0, h);
      for (int tx = 0; tx < params.tile; ++tx) {
        const int x0 = std::clamp(left + tx * cell, 0, w);
        const int x1 = std::clamp(left + (tx + 1) * cell, 0, w);
        const int area = (x1 - x0) * (y1 - y0);
        if (area <= 0) continue;
        for (int o = 0; o < orientations; ++o) {
          const double mean = integrals[o].sum(x0, y0, x1, y1) / area;
          d.values[(static_cast<std::size_t>(ty) * params.tile + tx) * orientations + o] = static_cast<float>(mean);
        }
      }
    }
    for (float v : d.values) norm2 += static_cast<double>(v) * v;
    if (norm2 > 0.0) {
      const double inv = 1.0 / std::sqrt(norm2);
      for (float& v : d.values) v = static_cast<float>(v * inv);
    }
    out.push_back(std::move(d));
  }
  return out;
}

bool FeatureHistogram::blank() const {
  return std::all_of(bins.begin(), bins.end(), [](double b) { return b == 0.0; });
}

Codebook::Codebook(int k, int dim, std::vector<float> words, std::uint64_t training_seed, std::uint64_t corpus_hash)
    : k_(k), dim_(dim), words_(std::move(words)), training_seed_(training_seed), corpus_hash_(corpus_hash) {
  if (k < 2) throw ValidationError("codebook needs k >= 2");
  if (dim < 1) throw ValidationError("codebook descriptor length must be >= 1");
  if (words_.size() != static_cast<std::size_t>(k) * dim) throw ValidationError("codebook word buffer has wrong size");
  for (float v : words_) {
    if (!std::isfinite(v)) throw ValidationError("codebook words must be finite");
  }
}

namespace {

double squared_distance(std::span<const float> a, std::span<const float> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    acc += d * d;
  }
  return acc;
}

constexpr char kCodebookMagic[] = "DFCBK";
constexpr std::uint32_t kCodebookVersion = 1;

}  // namespace

int Codebook::nearest(std::span<const float> descriptor) const {
  if (descriptor.size() != static_cast<std::size_t>(dim_)) {
    throw ValidationError("descriptor length " + std::to_string(descriptor.size()) +
                          " does not match codebook word length " + std::to_string(dim_));
  }
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int i = 0; i < k_; ++i) {
    const double d = squared_distance(descriptor, word(i));
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

std::vector<std::uint8_t> Codebook::serialize() const {
  ByteWriter w;
  w.raw(std::string_view(kCodebookMagic, 5));
  w.u32(kCodebookVersion);
  w.u32(static_cast<std::uint32_t>(k_));
  w.u32(static_cast<std::uint32_t>(dim_));
  for (float v : words_) w.f32(v);
  w.u64(training_seed_);
  w.u64(corpus_hash_);
  return w.bytes();
}

Codebook Codebook::deserialize(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes, "codebook");
  if (r.raw(5) != std::string_view(kCodebookMagic, 5)) throw ParseError("codebook: bad magic");
  if (r.u32() != kCodebookVersion) throw ParseError("codebook: unsupported version");
  const std::uint32_t k = r.u32();
  const std::uint32_t dim = r.u32();
  if (static_cast<std::uint64_t>(k) * dim * 4 > r.remaining()) throw ParseError("codebook: file is truncated");
  std::vector<float> words(static_cast<std::size_t>(k) * dim);
  for (auto& v : words) v = r.f32();
  const std::uint64_t seed = r.u64();
  const std::uint64_t corpus = r.u64();
  if (!r.at_end()) throw ParseError("codebook: trailing bytes");
  try {
    return Codebook(static_cast<int>(k), static_cast<int>(dim), std::move(words), seed, corpus);
  } catch (const ValidationError& e) {
    throw ParseError(std::string("codebook: ") + e.what());
  }
}

std::uint64_t Codebook::hash() const {
  Fnv1a h;
  h.update(serialize());
  return h.digest();
}

void save_codebook(const Codebook& codebook, const std::filesystem::path& path) {
  write_file_bytes(path, codebook.serialize());
}

Codebook load_codebook(const std::filesystem::path& path) { return Codebook::deserialize(read_file_bytes(path)); }

Codebook train_codebook(std::span<const LocalDescriptor> descriptors, int k, std::uint64_t seed,
                        const CodebookTrainingOptions& options, std::uint64_t corpus_hash) {
  if (k < 2) throw ValidationError("codebook needs k >= 2");
  if (descriptors.size() < static_cast<std::size_t>(k)) {
    throw ValidationError("need at least k=" + std::to_string(k) + " descriptors, got " +
                          std::to_string(descriptors.size()));
  }
  const std::size_t dim = descriptors.front().values.size();
  for (const auto& d : descriptors) {
    if (d.values.size() != dim) throw ValidationError("descriptors have inconsistent lengths");
  }

  Rng rng(seed);
  std::vector<std::size_t> pick(descriptors.size());
  std::iota(pick.begin(), pick.end(), std::size_t{0});
  if (pick.size() > options.max_training_descriptors && options.max_training_descriptors >= static_cast<std::size_t>(k)) {
    for (std::size_t i = 0; i < options.max_training_descriptors; ++i) {
      std::swap(pick[i], pick[i + rng.below(pick.size() - i)]);
    }
    pick.resize(options.max_training_descriptors);
    std::sort(pick.begin(), pick.end());
  }
  const std::size_t n = pick.size();
  std::vector<float> data(n * dim);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(descriptors[pick[i]].values.begin(), descriptors[pick[i]].values.end(), data.begin() + i * dim);
  }
  auto point = [&](std::size_t i) { return std::span<const float>(data).subspan(i * dim, dim); };

  // k-means++ seeding.
  std::vector<float> centers(static_cast<std::size_t>(k) * dim);
  auto center = [&](int c) { return std::span<float>(centers).subspan(static_cast<std::size_t>(c) * dim, dim); };
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::vector<bool> chosen(n, false);
  std::size_t first = rng.below(n);
  for (int c = 0; c < k; ++c) {
    std::size_t idx = first;
    if (c > 0) {
      const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
      if (total > 0.0) {
        const double target = rng.unit() * total;
        double acc = 0.0;
        idx = n;
        for (std::size_t i = 0; i < n; ++i) {
          if (d2[i] <= 0.0) continue;
          acc += d2[i];
          idx = i;
          if (acc > target) break;
        }
      } else {
        idx = static_cast<std::size_t>(std::find(chosen.begin(), chosen.end(), false) - chosen.begin());
      }
    }
    chosen[idx] = true;
    std::copy(point(idx).begin(), point(idx).end(), center(c).begin());
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], squared_distance(point(i), center(c)));
  }

  std::vector<int> assignment(n, -1);
  std::vector<double> best_d(n);
  std::vector<double> sums(static_cast<std::size_t>(k) * dim);
  std::vector<std::size_t> counts(k);
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double d = squared_distance(point(i), center(c));
        if (d < bd) {
          bd = d;
          best = c;
        }
      }
      best_d[i] = bd;
      if (assignment[i] != best) {
        assignment[i] = best;
        changed = true;
      }
    }
    if (!changed && iter > 0) break;

    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const int c = assignment[i];
      ++counts[c];
      auto p = point(i);
      for (std::size_t j = 0; j < dim; ++j) sums[static_cast<std::size_t>(c) * dim + j] += p[j];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        // Re-seed an empty cluster with the worst-fitting point.
        const std::size_t far = static_cast<std::size_t>(std::max_element(best_d.begin(), best_d.end()) - best_d.begin());
        std::copy(point(far).begin(), point(far).end(), center(c).begin());
        best_d[far] = 0.0;
        continue;
      }
      for (std::size_t j = 0; j < dim; ++j) {
        center(c)[j] = static_cast<float>(sums[static_cast<std::size_t>(c) * dim + j] / static_cast<double>(counts[c]));
      }
    }
  }
  return Codebook(k, static_cast<int>(dim), std::move(centers), seed, corpus_hash);
}

FeatureHistogram encode_histogram(std::span<const LocalDescriptor> descriptors, const Codebook& codebook) {
  FeatureHistogram hist{std::vector<double>(codebook.k(), 0.0)};
  if (descriptors.empty()) return hist;
  for (const auto& d : descriptors) hist.bins[codebook.nearest(d.values)] += 1.0;
  const double total = static_cast<double>(descriptors.size());
  for (auto& b : hist.bins) b /= total;
  return hist;
}

GalifEncoder::GalifEncoder(GalifParams params) : params_(params), bank_(make_gabor_bank(params.bank)) {}

std::size_t GalifEncoder::descriptor_length() const {
  return static_cast<std::size_t>(params_.sampling.tile) * params_.sampling.tile * params_.bank.num_orientations;
}

const SpectralBank& GalifEncoder::spectral(CanvasSize size) const {
  std::lock_guard lock(cache_mutex_);
  for (const auto& s : cache_) {
    if (s->size() == size) return *s;
  }
  cache_.push_back(std::make_unique<SpectralBank>(bank_, size));
  return *cache_.back();
}

ResponseMaps GalifEncoder::responses(const SketchRaster& raster) const {
  Grid<float> image(raster.size());
  auto src = raster.cells();
  auto dst = image.cells();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] ? 1.0f : 0.0f;
  return spectral(raster.size()).apply(image);
}

std::vector<LocalDescriptor> GalifEncoder::describe(const SketchRaster& raster) const {
  if (count_ink(raster) == 0) return {};
  return sample_local_features(responses(raster), raster, params_.sampling);
}

FeatureHistogram GalifEncoder::encode(const SketchRaster& raster, const Codebook& codebook) const {
  if (static_cast<std::size_t>(codebook.dim()) != descriptor_length()) {
    throw ValidationError("codebook word length does not match the GALIF descriptor length");
  }
  return encode_histogram(describe(raster), codebook);
}

}  // namespace dualface
