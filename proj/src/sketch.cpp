#include "dualface/sketch.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace dualface {
namespace {

bool inside_canvas(Vertex v, CanvasSize canvas) {
  return v.x >= 0.0 && v.y >= 0.0 && v.x < canvas.width && v.y < canvas.height;
}

void validate_polyline(const std::vector<Vertex>& polyline, CanvasSize canvas) {
  if (polyline.empty()) throw ValidationError("stroke polyline is empty");
  for (std::size_t i = 0; i < polyline.size(); ++i) {
    const Vertex v = polyline[i];
    if (!std::isfinite(v.x) || !std::isfinite(v.y) || !inside_canvas(v, canvas)) {
      std::ostringstream msg;
      msg << "vertex " << i << " (" << v.x << ", " << v.y << ") lies outside the " << canvas.width << "x"
          << canvas.height << " canvas";
      throw ValidationError(msg.str());
    }
  }
}

double point_segment_distance(Vertex p, Vertex a, Vertex b) {
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = 0.0;
  if (len2 > 0.0) t = std::clamp(((p.x - a.x) * dx + (p.y - a.y) * dy) / len2, 0.0, 1.0);
  const double qx = a.x + t * dx - p.x;
  const double qy = a.y + t * dy - p.y;
  return std::sqrt(qx * qx + qy * qy);
}

void stamp(BinaryRaster& raster, int cx, int cy, int radius) {
  const int r2 = radius * radius;
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) {
      if (dx * dx + dy * dy > r2) continue;
      const int x = cx + dx;
      const int y = cy + dy;
      if (raster.contains(x, y)) raster.at(x, y) = 1;
    }
  }
}

void bresenham(BinaryRaster& raster, int x0, int y0, int x1, int y1, int radius) {
  const int dx = std::abs(x1 - x0);
  const int sx = x0 < x1 ? 1 : -1;
  const int dy = -std::abs(y1 - y0);
  const int sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  while (true) {
    stamp(raster, x0, y0, radius);
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

}  // namespace

StrokeSet::StrokeSet(CanvasSize canvas) : canvas_(canvas) {
  if (canvas.width <= 0 || canvas.height <= 0) throw ValidationError("canvas size must be positive");
}

const Stroke* StrokeSet::find(std::uint64_t id) const {
  auto it = std::find_if(strokes_.begin(), strokes_.end(), [id](const Stroke& s) { return s.id == id; });
  return it == strokes_.end() ? nullptr : &*it;
}

StrokeSet make_stroke_set(CanvasSize canvas, std::vector<Stroke> strokes) {
  StrokeSet set(canvas);
  for (std::size_t i = 0; i < strokes.size(); ++i) {
    const Stroke& s = strokes[i];
    validate_polyline(s.vertices, canvas);
    if (!(s.width > 0.0)) throw ValidationError("stroke width must be positive");
    if (i > 0 && s.order <= strokes[i - 1].order) throw ValidationError("stroke orders must be strictly increasing");
    for (std::size_t j = 0; j < i; ++j) {
      if (strokes[j].id == s.id) throw ValidationError("duplicate stroke id " + std::to_string(s.id));
    }
  }
  set.next_order_ = strokes.empty() ? 0 : strokes.back().order + 1;
  std::uint64_t max_id = 0;
  for (const auto& s : strokes) max_id = std::max(max_id, s.id);
  set.next_id_ = max_id + 1;
  set.strokes_ = std::move(strokes);
  return set;
}

StrokeSet add_stroke(const StrokeSet& set, std::vector<Vertex> polyline, double width) {
  validate_polyline(polyline, set.canvas_);
  if (!(width > 0.0) || !std::isfinite(width)) throw ValidationError("stroke width must be positive");
  StrokeSet next = set;
  next.strokes_.push_back(Stroke{next.next_id_, std::move(polyline), width, next.next_order_});
  ++next.next_id_;
  ++next.next_order_;
  return next;
}

double distance_to_polyline(Vertex p, const std::vector<Vertex>& polyline) {
  if (polyline.size() == 1) return point_segment_distance(p, polyline[0], polyline[0]);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < polyline.size(); ++i) {
    best = std::min(best, point_segment_distance(p, polyline[i], polyline[i + 1]));
  }
  return best;
}

StrokeSet erase_stroke(const StrokeSet& set, Vertex click, double tolerance) {
  std::ptrdiff_t hit = -1;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < set.strokes_.size(); ++i) {
    const double d = distance_to_polyline(click, set.strokes_[i].vertices);
    // Strokes are kept in order, so `<=` lets later (newer) strokes win ties.
    if (d <= tolerance && d <= best) {
      best = d;
      hit = static_cast<std::ptrdiff_t>(i);
    }
  }
  if (hit < 0) return set;
  StrokeSet next = set;
  next.strokes_.erase(next.strokes_.begin() + hit);
  return next;
}

StrokeSet undo(const StrokeSet& set) {
  if (set.strokes_.empty()) return set;
  StrokeSet next = set;
  next.strokes_.pop_back();
  return next;
}

void draw_polyline(BinaryRaster& raster, const std::vector<Vertex>& polyline, double width) {
  if (polyline.empty()) return;
  const int radius = std::max(0, static_cast<int>(std::lround((width - 1.0) / 2.0)));
  auto px = [](double v) { return static_cast<int>(std::lround(v)); };
  if (polyline.size() == 1) {
    stamp(raster, px(polyline[0].x), px(polyline[0].y), radius);
    return;
  }
  for (std::size_t i = 0; i + 1 < polyline.size(); ++i) {
    bresenham(raster, px(polyline[i].x), px(polyline[i].y), px(polyline[i + 1].x), px(polyline[i + 1].y), radius);
  }
}

SketchRaster rasterize(const StrokeSet& set, CanvasSize size) {
  if (size.width <= 0 || size.height <= 0) throw ValidationError("raster size must be positive");
  SketchRaster raster(size, 0);
  const double sx = static_cast<double>(size.width) / set.canvas().width;
  const double sy = static_cast<double>(size.height) / set.canvas().height;
  for (const auto& stroke : set.strokes()) {
    if (sx == 1.0 && sy == 1.0) {
      draw_polyline(raster, stroke.vertices, stroke.width);
      continue;
    }
    std::vector<Vertex> scaled;
    scaled.reserve(stroke.vertices.size());
    for (auto v : stroke.vertices) scaled.push_back({v.x * sx, v.y * sy});
    draw_polyline(raster, scaled, stroke.width * std::min(sx, sy));
  }
  return raster;
}

SketchRaster rasterize(const StrokeSet& set) { return rasterize(set, set.canvas()); }

std::string save_sketch(const StrokeSet& set) {
  nlohmann::ordered_json doc;
  doc["version"] = 1;
  doc["canvas"] = {set.canvas().width, set.canvas().height};
  auto strokes = nlohmann::ordered_json::array();
  for (const auto& s : set.strokes()) {
    nlohmann::ordered_json js;
    js["id"] = s.id;
    js["width"] = s.width;
    js["order"] = s.order;
    auto points = nlohmann::ordered_json::array();
    for (auto v : s.vertices) points.push_back({v.x, v.y});
    js["points"] = std::move(points);
    strokes.push_back(std::move(js));
  }
  doc["strokes"] = std::move(strokes);
  return doc.dump();
}

namespace {

const nlohmann::json& require(const nlohmann::json& obj, const char* field, const std::string& where) {
  auto it = obj.find(field);
  if (it == obj.end()) throw ParseError(where + ": missing field '" + field + "'");
  return *it;
}

double require_number(const nlohmann::json& obj, const char* field, const std::string& where) {
  const auto& v = require(obj, field, where);
  if (!v.is_number()) throw ParseError(where + ": field '" + field + "' must be a number");
  return v.get<double>();
}

}  // namespace

LoadedSketch load_sketch(std::string_view document) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(document);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("sketch document is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError("sketch document: expected an object");
  const auto& version = require(doc, "version", "sketch document");
  if (!version.is_number_integer() || version.get<int>() != 1) {
    throw ParseError("sketch document: unsupported 'version' (expected 1)");
  }
  const auto& canvas_json = require(doc, "canvas", "sketch document");
  if (!canvas_json.is_array() || canvas_json.size() != 2 || !canvas_json[0].is_number_integer() ||
      !canvas_json[1].is_number_integer()) {
    throw ParseError("sketch document: field 'canvas' must be [width, height]");
  }
  const CanvasSize canvas{canvas_json[0].get<int>(), canvas_json[1].get<int>()};
  if (canvas.width <= 0 || canvas.height <= 0) throw ParseError("sketch document: field 'canvas' must be positive");

  const auto& strokes_json = require(doc, "strokes", "sketch document");
  if (!strokes_json.is_array()) throw ParseError("sketch document: field 'strokes' must be an array");

  LoadedSketch out{StrokeSet(canvas), {}};
  std::vector<Stroke> strokes;
  for (std::size_t i = 0; i < strokes_json.size(); ++i) {
    const std::string where = "strokes[" + std::to_string(i) + "]";
    const auto& js = strokes_json[i];
    if (!js.is_object()) throw ParseError(where + ": expected an object");
    Stroke s;
    const auto& id = require(js, "id", where);
    if (!id.is_number_unsigned() && !(id.is_number_integer() && id.get<std::int64_t>() >= 0)) {
      throw ParseError(where + ": field 'id' must be a non-negative integer");
    }
    s.id = id.get<std::uint64_t>();
    s.width = require_number(js, "width", where);
    if (!(s.width > 0.0)) throw ParseError(where + ": field 'width' must be positive");
    const auto& order = require(js, "order", where);
    if (!order.is_number_integer()) throw ParseError(where + ": field 'order' must be an integer");
    s.order = order.get<std::int64_t>();
    const auto& points = require(js, "points", where);
    if (!points.is_array() || points.empty()) throw ParseError(where + ": field 'points' must be a non-empty array");
    for (const auto& p : points) {
      if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number()) {
        throw ParseError(where + ": field 'points' entries must be [x, y]");
      }
      s.vertices.push_back({p[0].get<double>(), p[1].get<double>()});
    }
    for (const auto& v : s.vertices) {
      if (!inside_canvas(v, canvas)) throw ParseError(where + ": field 'points' has a vertex outside the canvas");
    }
    strokes.push_back(std::move(s));
  }

  bool monotone = true;
  for (std::size_t i = 1; i < strokes.size(); ++i) monotone = monotone && strokes[i].order > strokes[i - 1].order;
  if (!monotone) {
    std::stable_sort(strokes.begin(), strokes.end(), [](const Stroke& a, const Stroke& b) { return a.order < b.order; });
    for (std::size_t i = 0; i < strokes.size(); ++i) strokes[i].order = static_cast<std::int64_t>(i);
    out.warnings.push_back("stroke orders were not strictly increasing; re-sequenced to 0.." +
                           std::to_string(strokes.size() - 1));
  }
  try {
    out.sketch = make_stroke_set(canvas, std::move(strokes));
  } catch (const ValidationError& e) {
    throw ParseError(std::string("sketch document: ") + e.what());
  }
  return out;
}

}  // namespace dualface
