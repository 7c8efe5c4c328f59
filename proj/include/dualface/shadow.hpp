#pragma once

#include <optional>
#include <span>
#include <vector>

#include "dualface/common.hpp"
#include "dualface/retrieval_index.hpp"

namespace dualface {

// Per-pixel suggestion strength in [0, 1]; 1 = every blended source has ink there.
using ShadowImage = Grid<double>;

enum class ShadowWeighting { kEqual, kSimilarity };

// Pixelwise weighted mean of binary contours. Weights are normalized to sum 1; omitted means equal.
ShadowImage blend_shadow(std::span<const ContourSketch> contours,
                         std::optional<std::span<const double>> weights = std::nullopt);

std::vector<double> shadow_weights(std::span<const RetrievalResult> results, ShadowWeighting mode);

// 8-bit raster for the UI: 255 * intensity, rounded.
GrayImage shadow_to_gray8(const ShadowImage& shadow);

}  // namespace dualface
