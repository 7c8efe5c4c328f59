#include "dualface/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "dualface/sketch.hpp"

namespace dualface {

double cross(Vertex o, Vertex a, Vertex b) { return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x); }

double polygon_area(const Polygon& polygon) {
  double twice = 0.0;
  for (std::size_t i = 0; i < polygon.size(); ++i) {
    const Vertex a = polygon[i];
    const Vertex b = polygon[(i + 1) % polygon.size()];
    twice += a.x * b.y - b.x * a.y;
  }
  return std::abs(twice) / 2.0;
}

Vertex polygon_centroid(const Polygon& polygon) {
  double twice = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  for (std::size_t i = 0; i < polygon.size(); ++i) {
    const Vertex a = polygon[i];
    const Vertex b = polygon[(i + 1) % polygon.size()];
    const double c = a.x * b.y - b.x * a.y;
    twice += c;
    cx += (a.x + b.x) * c;
    cy += (a.y + b.y) * c;
  }
  if (twice == 0.0) return polygon.empty() ? Vertex{} : polygon.front();
  return {cx / (3.0 * twice), cy / (3.0 * twice)};
}

namespace {

int sign(double v) { return (v > 0.0) - (v < 0.0); }

bool on_segment(Vertex a, Vertex b, Vertex p) {
  return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= p.y &&
         p.y <= std::max(a.y, b.y);
}

double segment_distance(Vertex p, Vertex a, Vertex b) { return distance_to_polyline(p, {a, b}); }

}  // namespace

bool segments_intersect(Vertex a, Vertex b, Vertex c, Vertex d) {
  const int d1 = sign(cross(c, d, a));
  const int d2 = sign(cross(c, d, b));
  const int d3 = sign(cross(a, b, c));
  const int d4 = sign(cross(a, b, d));
  if (d1 * d2 < 0 && d3 * d4 < 0) return true;
  if (d1 == 0 && on_segment(c, d, a)) return true;
  if (d2 == 0 && on_segment(c, d, b)) return true;
  if (d3 == 0 && on_segment(a, b, c)) return true;
  if (d4 == 0 && on_segment(a, b, d)) return true;
  return false;
}

bool is_simple_polygon(const Polygon& polygon) {
  const std::size_t n = polygon.size();
  if (n < 3) return false;
  for (std::size_t i = 0; i < n; ++i) {
    const Vertex a = polygon[i];
    const Vertex b = polygon[(i + 1) % n];
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool adjacent = j == i + 1 || (i == 0 && j == n - 1);
      const Vertex c = polygon[j];
      const Vertex d = polygon[(j + 1) % n];
      if (adjacent) {
        // Adjacent edges may only meet at their shared vertex (no fold-back overlap).
        const Vertex shared = j == i + 1 ? b : a;
        const Vertex other_first = j == i + 1 ? a : b;
        const Vertex other_second = j == i + 1 ? d : c;
        if (cross(other_first, shared, other_second) == 0.0) {
          const double dot = (other_first.x - shared.x) * (other_second.x - shared.x) +
                             (other_first.y - shared.y) * (other_second.y - shared.y);
          if (dot > 0.0) return false;
        }
        continue;
      }
      if (segments_intersect(a, b, c, d)) return false;
    }
  }
  return true;
}

bool polygon_contains(const Polygon& polygon, Vertex p, double tolerance) {
  const std::size_t n = polygon.size();
  if (n == 0) return false;
  bool inside = false;
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vertex a = polygon[i];
    const Vertex b = polygon[j];
    if (segment_distance(p, a, b) <= tolerance) return true;
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (p.x < x) inside = !inside;
    }
  }
  return inside;
}

Polygon convex_hull(std::span<const Vertex> points) {
  std::vector<Vertex> pts(points.begin(), points.end());
  std::sort(pts.begin(), pts.end(), [](Vertex a, Vertex b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;
  Polygon hull(2 * pts.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0.0) --k;
    hull[k++] = pts[i];
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i > 0; --i) {
    while (k >= t && cross(hull[k - 2], hull[k - 1], pts[i - 1]) <= 0.0) --k;
    hull[k++] = pts[i - 1];
  }
  hull.resize(k - 1);
  return hull;
}

namespace {

// Counter-clockwise angle from `from` to `to`, in (0, 2*pi]; zero maps to 2*pi.
double ccw_angle(Vertex from, Vertex to) {
  double a = std::atan2(from.x * to.y - from.y * to.x, from.x * to.x + from.y * to.y);
  if (a <= 0.0) a += 2.0 * std::numbers::pi;
  return a;
}

// One gift-wrapping attempt in a y-up frame, traversing counter-clockwise. Returns an empty
// polygon when every candidate edge would cross the partial hull.
Polygon wrap_with_k(const std::vector<Vertex>& pts, std::size_t k) {
  const std::size_t n = pts.size();
  std::size_t first = 0;
  for (std::size_t i = 1; i < n; ++i) {
    if (pts[i].y < pts[first].y || (pts[i].y == pts[first].y && pts[i].x < pts[first].x)) first = i;
  }
  std::vector<bool> available(n, true);
  available[first] = false;
  std::vector<std::size_t> hull{first};
  std::size_t current = first;
  Vertex back{-1.0, 0.0};  // pretend we arrived heading east

  std::vector<std::size_t> pool;
  while (true) {
    if (hull.size() == 4) available[first] = true;
    pool.clear();
    for (std::size_t i = 0; i < n; ++i) {
      if (available[i]) pool.push_back(i);
    }
    if (pool.empty()) return {};
    const Vertex c = pts[current];
    auto dist2 = [&](std::size_t i) {
      const double dx = pts[i].x - c.x;
      const double dy = pts[i].y - c.y;
      return dx * dx + dy * dy;
    };
    const std::size_t take = std::min(k, pool.size());
    std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(take), pool.end(),
                      [&](std::size_t a, std::size_t b) {
                        const double da = dist2(a);
                        const double db = dist2(b);
                        return da < db || (da == db && a < b);
                      });
    pool.resize(take);
    std::vector<std::pair<double, std::size_t>> ranked;
    for (std::size_t i : pool) ranked.emplace_back(ccw_angle(back, {pts[i].x - c.x, pts[i].y - c.y}), i);
    std::sort(ranked.begin(), ranked.end());

    std::size_t chosen = n;
    for (const auto& [angle, cand] : ranked) {
      const bool closing = cand == first;
      bool crosses = false;
      // Skip the edge ending at `current`, and when closing, the edge leaving `first`.
      const std::size_t edges = hull.size() - 1;
      for (std::size_t e = closing ? 1 : 0; e + 1 < edges && !crosses; ++e) {
        crosses = segments_intersect(c, pts[cand], pts[hull[e]], pts[hull[e + 1]]);
      }
      if (!crosses) {
        chosen = cand;
        break;
      }
    }
    if (chosen == n) return {};
    if (chosen == first) break;
    back = {c.x - pts[chosen].x, c.y - pts[chosen].y};
    hull.push_back(chosen);
    available[chosen] = false;
    current = chosen;
    if (hull.size() > n) return {};
  }
  Polygon out;
  out.reserve(hull.size());
  for (std::size_t i : hull) out.push_back(pts[i]);
  return out;
}

}  // namespace

Polygon concave_hull(std::span<const Vertex> points, int k_neighbors) {
  std::vector<Vertex> pts(points.begin(), points.end());
  std::sort(pts.begin(), pts.end(), [](Vertex a, Vertex b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) throw DegenerateGeometryError("concave hull needs at least 3 distinct points");
  bool collinear = true;
  for (std::size_t i = 2; i < pts.size() && collinear; ++i) collinear = cross(pts[0], pts[1], pts[i]) == 0.0;
  if (collinear) throw DegenerateGeometryError("concave hull points are all collinear");

  // Work in a y-up frame so "counter-clockwise" reads conventionally.
  for (auto& p : pts) p.y = -p.y;
  auto to_canvas = [](Polygon poly) {
    for (auto& p : poly) p.y = -p.y;
    return poly;
  };

  const std::size_t n = pts.size();
  if (n == 3) return to_canvas(pts);
  std::size_t k = static_cast<std::size_t>(std::max(3, k_neighbors));
  while (k < n) {
    Polygon hull = wrap_with_k(pts, k);
    if (hull.size() >= 3 && is_simple_polygon(hull) &&
        std::all_of(pts.begin(), pts.end(), [&](Vertex p) { return polygon_contains(hull, p, 1e-7); })) {
      return to_canvas(std::move(hull));
    }
    k += std::max<std::size_t>(1, k / 4);
  }
  return to_canvas(convex_hull(pts));
}

void fill_polygon(BinaryRaster& raster, const Polygon& polygon) {
  if (polygon.empty()) return;
  double min_y = polygon.front().y;
  double max_y = polygon.front().y;
  for (auto v : polygon) {
    min_y = std::min(min_y, v.y);
    max_y = std::max(max_y, v.y);
  }
  const int y0 = std::max(0, static_cast<int>(std::ceil(min_y)));
  const int y1 = std::min(raster.height() - 1, static_cast<int>(std::floor(max_y)));
  std::vector<double> xs;
  const std::size_t n = polygon.size();
  for (int y = y0; y <= y1; ++y) {
    xs.clear();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
      const Vertex a = polygon[i];
      const Vertex b = polygon[j];
      if ((a.y > y) != (b.y > y)) xs.push_back(a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y));
    }
    std::sort(xs.begin(), xs.end());
    for (std::size_t i = 0; i + 1 < xs.size(); i += 2) {
      const int xa = std::max(0, static_cast<int>(std::ceil(xs[i])));
      const int xb = std::min(raster.width() - 1, static_cast<int>(std::floor(xs[i + 1])));
      for (int x = xa; x <= xb; ++x) raster.at(x, y) = 1;
    }
  }
  Polygon closed = polygon;
  closed.push_back(polygon.front());
  draw_polyline(raster, closed, 1.0);
}

}  // namespace dualface
