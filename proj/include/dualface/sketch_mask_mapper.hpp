#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dualface/geometry.hpp"
#include "dualface/mask_pipeline.hpp"
#include "dualface/sketch.hpp"

namespace dualface {

// Exact squared Euclidean distance to the nearest set pixel (separable lower-envelope transform).
// Pixels of an empty region get UINT32_MAX.
Grid<std::uint32_t> squared_distance_transform(const BinaryRaster& region);

// Per-label distance grids for a mask: 0 on the region, Euclidean distance elsewhere.
class RegionDistanceField {
 public:
  RegionDistanceField() = default;

  CanvasSize size() const { return size_; }
  bool present(LabelId k) const { return fields_[k] != nullptr; }
  // Present labels in ascending order (background included when present).
  const std::vector<LabelId>& labels() const { return labels_; }
  std::uint32_t squared(LabelId k, int x, int y) const;
  double distance(LabelId k, int x, int y) const;

 private:
  friend RegionDistanceField build_distance_fields(const LabelMask& mask);
  CanvasSize size_;
  std::vector<LabelId> labels_;
  std::array<std::shared_ptr<const Grid<std::uint32_t>>, 256> fields_{};
};

RegionDistanceField build_distance_fields(const LabelMask& mask);

// Vertices are looked up at their nearest pixel, clamped to the canvas.
struct PixelPos {
  int x = 0;
  int y = 0;
};
PixelPos vertex_pixel(Vertex p, CanvasSize size);

// Label whose region is nearest to `p`; background never wins, ties go to the lowest id.
// Throws ValidationError when the mask holds background only.
LabelId vertex_label(Vertex p, const RegionDistanceField& fields);

// Majority vote of vertex labels; vote ties go to the smaller summed vertex distance, then lowest id.
LabelId stroke_label(const Stroke& stroke, const RegionDistanceField& fields);

struct LabeledStroke {
  Stroke stroke;
  LabelId label = 0;
};

std::vector<LabeledStroke> label_strokes(const StrokeSet& strokes, const RegionDistanceField& fields);

// Shape-fit score: sum over strokes of the mean vertex distance to the stroke's voted region.
// Lower is better; throws ValidationError for an empty stroke set.
double template_score(const StrokeSet& strokes, const RegionDistanceField& fields);
double template_score(const StrokeSet& strokes, const LabelMask& mask);

// Order-preserving concatenation of the vertices of equally labeled strokes.
std::vector<Vertex> merge_strokes(std::span<const LabeledStroke> strokes);

enum class RegionSource : std::uint8_t { kTemplate = 1, kStrokes = 2 };

struct MergedMask {
  LabelMask mask;
  std::map<LabelId, RegionSource> provenance;  // every non-background template label
  std::map<LabelId, Polygon> hulls;            // replaced labels with a usable hull
  std::vector<LabeledStroke> labeled_strokes;
  std::vector<std::string> warnings;
};

struct MappingOptions {
  int hull_k = 5;
};

// Rebuilds the template mask from the strokes: each label with strokes takes the filled concave
// hull of its merged vertices, every other label keeps the template region. Overlaps resolve by
// palette precedence; pixels vacated by a moved region take the nearest lower-precedence region.
MergedMask map_sketch_to_mask(const StrokeSet& strokes, const LabelMask& template_mask,
                              const MappingOptions& options = {});

// Index of the template with the lowest score (ties: earliest).
std::size_t select_template(const StrokeSet& strokes, std::span<const LabelMask> templates);

// Paletted raster pair: label ids, and provenance (0 background, 1 template, 2 strokes).
void write_mapping_debug(const MergedMask& merged, const std::filesystem::path& dir);

}  // namespace dualface
