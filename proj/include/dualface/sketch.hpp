#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "dualface/common.hpp"

namespace dualface {

inline constexpr double kDefaultEraseTolerance = 6.0;

struct Stroke {
  std::uint64_t id = 0;
  std::vector<Vertex> vertices;  // as captured, never resampled
  double width = 1.0;
  std::int64_t order = 0;

  friend bool operator==(const Stroke&, const Stroke&) = default;
};

// Immutable-by-convention snapshot of the user's drawing. Edits return a new value.
class StrokeSet {
 public:
  explicit StrokeSet(CanvasSize canvas = kDefaultCanvas);

  const std::vector<Stroke>& strokes() const { return strokes_; }
  CanvasSize canvas() const { return canvas_; }
  bool empty() const { return strokes_.empty(); }
  std::size_t size() const { return strokes_.size(); }

  // Order/id the next added stroke receives. Undo does not rewind these.
  std::int64_t next_order() const { return next_order_; }
  std::uint64_t next_id() const { return next_id_; }

  const Stroke* find(std::uint64_t id) const;

  // Equality covers canvas and strokes; the sequence counters are bookkeeping.
  friend bool operator==(const StrokeSet& a, const StrokeSet& b) {
    return a.canvas_ == b.canvas_ && a.strokes_ == b.strokes_;
  }

 private:
  friend StrokeSet add_stroke(const StrokeSet&, std::vector<Vertex>, double);
  friend StrokeSet erase_stroke(const StrokeSet&, Vertex, double);
  friend StrokeSet undo(const StrokeSet&);
  friend StrokeSet make_stroke_set(CanvasSize, std::vector<Stroke>);

  CanvasSize canvas_;
  std::vector<Stroke> strokes_;
  std::int64_t next_order_ = 0;
  std::uint64_t next_id_ = 1;
};

// Builds a set from already-validated strokes (orders strictly increasing, ids unique).
StrokeSet make_stroke_set(CanvasSize canvas, std::vector<Stroke> strokes);

StrokeSet add_stroke(const StrokeSet& set, std::vector<Vertex> polyline, double width);

// Removes the stroke nearest to `click` if it lies within `tolerance`; ties go to the newest stroke.
StrokeSet erase_stroke(const StrokeSet& set, Vertex click, double tolerance = kDefaultEraseTolerance);

StrokeSet undo(const StrokeSet& set);

double distance_to_polyline(Vertex p, const std::vector<Vertex>& polyline);

// Strokes are drawn in order as connected Bresenham segments, stamped with a disk for width > 1.
SketchRaster rasterize(const StrokeSet& set, CanvasSize size);
SketchRaster rasterize(const StrokeSet& set);

// Draws a single polyline into `raster` with value 1.
void draw_polyline(BinaryRaster& raster, const std::vector<Vertex>& polyline, double width);

std::string save_sketch(const StrokeSet& set);

struct LoadedSketch {
  StrokeSet sketch;
  std::vector<std::string> warnings;
};

LoadedSketch load_sketch(std::string_view document);

}  // namespace dualface
