#include "dualface/sketch_mask_mapper.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dualface/image_io.hpp"

namespace dualface {
namespace {

constexpr std::uint32_t kFar = std::numeric_limits<std::uint32_t>::max();

// Lower envelope of parabolas rooted at the finite samples of f; writes min_p (q-p)^2 + f[p].
void envelope_1d(const std::vector<double>& f, std::vector<double>& out, std::vector<int>& roots,
                 std::vector<double>& bounds) {
  const int n = static_cast<int>(f.size());
  roots.clear();
  bounds.clear();
  for (int q = 0; q < n; ++q) {
    if (!std::isfinite(f[q])) continue;
    while (!roots.empty()) {
      const int p = roots.back();
      const double s = ((f[q] + double(q) * q) - (f[p] + double(p) * p)) / (2.0 * q - 2.0 * p);
      if (s <= bounds.back()) {
        roots.pop_back();
        bounds.pop_back();
        continue;
      }
      roots.push_back(q);
      bounds.push_back(s);
      break;
    }
    if (roots.empty()) {
      roots.push_back(q);
      bounds.push_back(-std::numeric_limits<double>::infinity());
    }
  }
  if (roots.empty()) {
    std::fill(out.begin(), out.end(), std::numeric_limits<double>::infinity());
    return;
  }
  std::size_t k = 0;
  for (int q = 0; q < n; ++q) {
    while (k + 1 < roots.size() && bounds[k + 1] < q) ++k;
    const double d = q - roots[k];
    out[q] = d * d + f[roots[k]];
  }
}

}  // namespace

Grid<std::uint32_t> squared_distance_transform(const BinaryRaster& region) {
  const int w = region.width();
  const int h = region.height();
  const double inf = std::numeric_limits<double>::infinity();
  Grid<double> columns(w, h, inf);
  std::vector<double> f;
  std::vector<double> out;
  std::vector<int> roots;
  std::vector<double> bounds;

  f.resize(h);
  out.resize(h);
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) f[y] = region.at(x, y) ? 0.0 : inf;
    envelope_1d(f, out, roots, bounds);
    for (int y = 0; y < h; ++y) columns.at(x, y) = out[y];
  }
  Grid<std::uint32_t> result(w, h, kFar);
  f.resize(w);
  out.resize(w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) f[x] = columns.at(x, y);
    envelope_1d(f, out, roots, bounds);
    for (int x = 0; x < w; ++x) {
      if (std::isfinite(out[x])) result.at(x, y) = static_cast<std::uint32_t>(out[x]);
    }
  }
  return result;
}

std::uint32_t RegionDistanceField::squared(LabelId k, int x, int y) const {
  if (!present(k)) throw NotFoundError("label " + std::to_string(k) + " is absent from the mask");
  return fields_[k]->at(x, y);
}

double RegionDistanceField::distance(LabelId k, int x, int y) const { return std::sqrt(double(squared(k, x, y))); }

RegionDistanceField build_distance_fields(const LabelMask& mask) {
  RegionDistanceField out;
  out.size_ = mask.size();
  out.labels_ = mask.present_labels();
  for (LabelId k : out.labels_) {
    BinaryRaster region(mask.size(), 0);
    auto src = mask.labels().cells();
    auto dst = region.cells();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] == k;
    out.fields_[k] = std::make_shared<const Grid<std::uint32_t>>(squared_distance_transform(region));
  }
  return out;
}

PixelPos vertex_pixel(Vertex p, CanvasSize size) {
  const int x = std::clamp(static_cast<int>(std::lround(p.x)), 0, size.width - 1);
  const int y = std::clamp(static_cast<int>(std::lround(p.y)), 0, size.height - 1);
  return {x, y};
}

LabelId vertex_label(Vertex p, const RegionDistanceField& fields) {
  const PixelPos px = vertex_pixel(p, fields.size());
  std::optional<LabelId> best;
  std::uint32_t best_d = kFar;
  for (LabelId k : fields.labels()) {
    if (k == kBackgroundLabel) continue;
    const std::uint32_t d = fields.squared(k, px.x, px.y);
    if (!best || d < best_d) {
      best = k;
      best_d = d;
    }
  }
  if (!best) throw ValidationError("template mask has no foreground regions to label strokes against");
  return *best;
}

LabelId stroke_label(const Stroke& stroke, const RegionDistanceField& fields) {
  if (stroke.vertices.empty()) throw ValidationError("stroke has no vertices");
  std::map<LabelId, std::size_t> votes;
  for (const auto& v : stroke.vertices) ++votes[vertex_label(v, fields)];
  std::size_t top = 0;
  for (const auto& [k, n] : votes) top = std::max(top, n);
  std::vector<LabelId> tied;
  for (const auto& [k, n] : votes) {
    if (n == top) tied.push_back(k);
  }
  if (tied.size() == 1) return tied.front();
  LabelId best = tied.front();
  double best_sum = std::numeric_limits<double>::infinity();
  for (LabelId k : tied) {  // ascending, so strict `<` keeps the lowest id on equal sums
    double sum = 0.0;
    for (const auto& v : stroke.vertices) {
      const PixelPos px = vertex_pixel(v, fields.size());
      sum += fields.distance(k, px.x, px.y);
    }
    if (sum < best_sum) {
      best_sum = sum;
      best = k;
    }
  }
  return best;
}

std::vector<LabeledStroke> label_strokes(const StrokeSet& strokes, const RegionDistanceField& fields) {
  std::vector<LabeledStroke> out;
  out.reserve(strokes.size());
  for (const auto& s : strokes.strokes()) out.push_back({s, stroke_label(s, fields)});
  return out;
}

double template_score(const StrokeSet& strokes, const RegionDistanceField& fields) {
  if (strokes.empty()) throw ValidationError("template score needs at least one stroke");
  double score = 0.0;
  for (const auto& s : strokes.strokes()) {
    const LabelId k = stroke_label(s, fields);
    double sum = 0.0;
    for (const auto& v : s.vertices) {
      const PixelPos px = vertex_pixel(v, fields.size());
      sum += fields.distance(k, px.x, px.y);
    }
    score += sum / static_cast<double>(s.vertices.size());
  }
  return score;
}

double template_score(const StrokeSet& strokes, const LabelMask& mask) {
  if (strokes.empty()) throw ValidationError("template score needs at least one stroke");
  return template_score(strokes, build_distance_fields(mask));
}

std::vector<Vertex> merge_strokes(std::span<const LabeledStroke> strokes) {
  if (strokes.empty()) throw ValidationError("nothing to merge");
  const LabelId label = strokes.front().label;
  std::vector<Vertex> merged;
  for (const auto& s : strokes) {
    if (s.label != label) throw ValidationError("cannot merge strokes with different labels");
    merged.insert(merged.end(), s.stroke.vertices.begin(), s.stroke.vertices.end());
  }
  return merged;
}

namespace {

// Stroke band dilated by the stroke width, used when the hull is degenerate.
BinaryRaster stroke_band(std::span<const LabeledStroke> strokes, CanvasSize size) {
  BinaryRaster band(size, 0);
  double width = 1.0;
  for (const auto& s : strokes) {
    draw_polyline(band, s.stroke.vertices, s.stroke.width);
    width = std::max(width, s.stroke.width);
  }
  const auto dist = squared_distance_transform(band);
  const double r2 = width * width;
  BinaryRaster out(size, 0);
  auto d = dist.cells();
  auto o = out.cells();
  for (std::size_t i = 0; i < d.size(); ++i) o[i] = d[i] != kFar && d[i] <= r2;
  return out;
}

bool claims_before(const Palette& palette, LabelId a, LabelId b) {
  const int pa = palette.precedence(a);
  const int pb = palette.precedence(b);
  return pa < pb || (pa == pb && a < b);
}

}  // namespace

MergedMask map_sketch_to_mask(const StrokeSet& strokes, const LabelMask& template_mask, const MappingOptions& options) {
  MergedMask out;
  out.mask = template_mask;
  const Palette& palette = template_mask.palette();
  const std::vector<LabelId> template_labels = template_mask.present_labels();
  for (LabelId k : template_labels) {
    if (k != kBackgroundLabel) out.provenance[k] = RegionSource::kTemplate;
  }
  if (strokes.empty()) return out;
  if (out.provenance.empty()) {
    out.warnings.push_back("template mask has no foreground regions; strokes ignored");
    return out;
  }

  const CanvasSize size = template_mask.size();
  const RegionDistanceField fields = build_distance_fields(template_mask);
  out.labeled_strokes = label_strokes(strokes, fields);

  std::map<LabelId, std::vector<LabeledStroke>> groups;
  for (const auto& ls : out.labeled_strokes) groups[ls.label].push_back(ls);

  std::map<LabelId, BinaryRaster> replaced;
  for (const auto& [k, group] : groups) {
    BinaryRaster region(size, 0);
    try {
      Polygon hull = concave_hull(merge_strokes(group), options.hull_k);
      fill_polygon(region, hull);
      out.hulls[k] = std::move(hull);
    } catch (const DegenerateGeometryError& e) {
      region = stroke_band(group, size);
      out.warnings.push_back("label '" + palette.name(k) + "': " + e.what() + "; using the stroke band");
    }
    replaced.emplace(k, std::move(region));
    out.provenance[k] = RegionSource::kStrokes;
  }

  // Each pixel goes to the highest-precedence claim among kept template regions and stroke regions.
  constexpr LabelId kVacated = 255;
  const auto& source = template_mask.labels();
  Grid<LabelId> composed(size, kBackgroundLabel);
  bool any_vacated = false;
  for (int y = 0; y < size.height; ++y) {
    for (int x = 0; x < size.width; ++x) {
      const LabelId t = source.at(x, y);
      std::optional<LabelId> claim;
      if (t != kBackgroundLabel && !replaced.contains(t)) claim = t;
      for (const auto& [k, region] : replaced) {
        if (region.at(x, y) && (!claim || claims_before(palette, k, *claim))) claim = k;
      }
      if (claim) {
        composed.at(x, y) = *claim;
      } else if (t != kBackgroundLabel) {
        composed.at(x, y) = kVacated;
        any_vacated = true;
      }
    }
  }

  if (any_vacated) {
    // Nearest kept region that sits beneath the moved label (e.g. skin under an eye), else background.
    std::map<LabelId, Grid<std::uint32_t>> kept_fields;
    for (LabelId k : template_labels) {
      if (replaced.contains(k)) continue;
      BinaryRaster region(size, 0);
      bool any = false;
      for (int y = 0; y < size.height; ++y) {
        for (int x = 0; x < size.width; ++x) {
          if (composed.at(x, y) == k) {
            region.at(x, y) = 1;
            any = true;
          }
        }
      }
      if (any) kept_fields.emplace(k, squared_distance_transform(region));
    }
    Grid<LabelId> filled = composed;
    for (int y = 0; y < size.height; ++y) {
      for (int x = 0; x < size.width; ++x) {
        if (composed.at(x, y) != kVacated) continue;
        const int moved_rank = palette.precedence(source.at(x, y));
        LabelId best = kBackgroundLabel;
        std::uint32_t best_d = kFar;
        for (const auto& [k, field] : kept_fields) {
          if (palette.precedence(k) <= moved_rank) continue;
          const std::uint32_t d = field.at(x, y);
          if (d < best_d) {
            best_d = d;
            best = k;
          }
        }
        filled.at(x, y) = best;
      }
    }
    composed = std::move(filled);
  }

  // Never let a template label disappear entirely.
  std::array<std::size_t, 256> counts{};
  for (auto v : composed.cells()) ++counts[v];
  for (LabelId k : template_labels) {
    if (k == kBackgroundLabel || counts[k] > 0) continue;
    auto it = replaced.find(k);
    for (int y = 0; y < size.height; ++y) {
      for (int x = 0; x < size.width; ++x) {
        const bool mine = it != replaced.end() ? it->second.at(x, y) != 0 : source.at(x, y) == k;
        if (mine) composed.at(x, y) = k;
      }
    }
    out.warnings.push_back("label '" + palette.name(k) + "' was fully covered; restored on top");
  }

  out.mask = LabelMask(std::move(composed), palette);
  return out;
}

std::size_t select_template(const StrokeSet& strokes, std::span<const LabelMask> templates) {
  if (templates.empty()) throw ValidationError("no templates to select from");
  if (strokes.empty()) return 0;
  std::size_t best = 0;
  double best_score = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < templates.size(); ++i) {
    const double f = template_score(strokes, templates[i]);
    if (f < best_score) {
      best_score = f;
      best = i;
    }
  }
  return best;
}

void write_mapping_debug(const MergedMask& merged, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_gray8(dir / "merged_mask.png", merged.mask.labels());
  GrayImage provenance(merged.mask.size(), 0);
  for (int y = 0; y < provenance.height(); ++y) {
    for (int x = 0; x < provenance.width(); ++x) {
      const LabelId k = merged.mask.at(x, y);
      if (k == kBackgroundLabel) continue;
      auto it = merged.provenance.find(k);
      provenance.at(x, y) = static_cast<std::uint8_t>(it == merged.provenance.end() ? 0 : int(it->second));
    }
  }
  write_gray8(dir / "provenance.png", provenance);
}

}  // namespace dualface
