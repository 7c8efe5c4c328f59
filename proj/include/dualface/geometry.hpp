#pragma once

#include <span>
#include <vector>

#include "dualface/common.hpp"

namespace dualface {

using Polygon = std::vector<Vertex>;

double cross(Vertex o, Vertex a, Vertex b);
double polygon_area(const Polygon& polygon);  // unsigned
Vertex polygon_centroid(const Polygon& polygon);

// Inclusive segment intersection (touching and collinear overlap count).
bool segments_intersect(Vertex a, Vertex b, Vertex c, Vertex d);

// True when no two non-adjacent edges intersect and adjacent edges share only their joint.
bool is_simple_polygon(const Polygon& polygon);

// Even-odd test; points within `tolerance` of the boundary count as inside.
bool polygon_contains(const Polygon& polygon, Vertex p, double tolerance = 1e-9);

// Andrew's monotone chain; drops collinear points.
Polygon convex_hull(std::span<const Vertex> points);

// k-nearest-neighbour gift wrapping. `k` escalates until the polygon is simple and contains
// every input point; at k == point count the convex hull is returned.
// Throws DegenerateGeometryError for fewer than 3 distinct or all-collinear points.
Polygon concave_hull(std::span<const Vertex> points, int k_neighbors = 5);

// Even-odd fill sampled at pixel centres (integer coordinates) plus the boundary edges.
void fill_polygon(BinaryRaster& raster, const Polygon& polygon);

}  // namespace dualface
