#include "dualface/shadow.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dualface {

ShadowImage blend_shadow(std::span<const ContourSketch> contours, std::optional<std::span<const double>> weights) {
  if (contours.empty()) throw ValidationError("shadow blend needs at least one contour");
  const CanvasSize size = contours.front().size();
  for (const auto& c : contours) {
    if (c.size() != size) throw ValidationError("shadow blend inputs differ in size");
  }
  std::vector<double> w(contours.size(), 1.0);
  if (weights) {
    if (weights->size() != contours.size()) throw ValidationError("shadow weights and contours differ in count");
    for (double v : *weights) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError("shadow weights must be finite and non-negative");
    }
    w.assign(weights->begin(), weights->end());
  }
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  if (total <= 0.0) throw ValidationError("shadow weights must not all be zero");
  for (auto& v : w) v /= total;

  ShadowImage out(size, 0.0);
  auto dst = out.cells();
  for (std::size_t i = 0; i < contours.size(); ++i) {
    auto src = contours[i].cells();
    for (std::size_t p = 0; p < dst.size(); ++p) {
      if (src[p]) dst[p] += w[i];
    }
  }
  for (auto& v : dst) v = std::clamp(v, 0.0, 1.0);
  return out;
}

std::vector<double> shadow_weights(std::span<const RetrievalResult> results, ShadowWeighting mode) {
  std::vector<double> w;
  w.reserve(results.size());
  for (const auto& r : results) w.push_back(mode == ShadowWeighting::kEqual ? 1.0 : r.similarity);
  if (mode == ShadowWeighting::kSimilarity && std::all_of(w.begin(), w.end(), [](double v) { return v == 0.0; })) {
    std::fill(w.begin(), w.end(), 1.0);
  }
  return w;
}

GrayImage shadow_to_gray8(const ShadowImage& shadow) {
  GrayImage out(shadow.size());
  auto src = shadow.cells();
  auto dst = out.cells();
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i] = static_cast<std::uint8_t>(std::lround(std::clamp(src[i], 0.0, 1.0) * 255.0));
  }
  return out;
}

}  // namespace dualface
