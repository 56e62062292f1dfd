#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

namespace amodal {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  bool operator==(const Point2&) const = default;
};

// Closed loops in pixel coordinates. Outer rings run counter-clockwise
// (positive signed area), holes clockwise. Last vertex is not repeated.
struct Polygon2D {
  std::vector<std::vector<Point2>> rings;

  // Sum of signed ring areas; holes subtract.
  double area() const;
};

double signed_area(std::span<const Point2> ring);

// Delaunay triangulation with exact predicates. Input coordinates are snapped
// to a 2^-24 fraction of the bounding extent; coincident points after
// snapping share a vertex.
struct Triangulation {
  std::vector<Point2> vertices;
  std::vector<std::array<int, 3>> triangles;  // counter-clockwise
  // neighbors[t][i] is across the edge opposite triangles[t][i]; -1 on the hull
  std::vector<std::array<int, 3>> neighbors;
  std::vector<int> point_to_vertex;
};

// Throws DegenerateGeometry for < 3 distinct points or collinear input.
Triangulation delaunay(std::span<const Point2> points);

double circumradius(const Point2& a, const Point2& b, const Point2& c);

// Andrew's monotone chain; counter-clockwise, no collinear vertices.
std::vector<Point2> convex_hull(std::span<const Point2> points);

struct HullResult {
  Polygon2D polygon;
  double alpha = 0.0;  // 0 when the convex hull was used
  bool convex_fallback = false;
};

// Alpha shape: the union of Delaunay triangles whose circumradius is at most
// 1/alpha. alpha = 0 gives the convex hull. Without an explicit alpha the
// largest alpha is chosen whose shape is one edge-connected region without
// holes, with a simple boundary at every vertex, and which touches at least
// `min_coverage` of the input points.
HullResult concave_hull(std::span<const Point2> points, std::optional<double> alpha = std::nullopt,
                        double min_coverage = 0.99);

// Even-odd test; points on the boundary count as inside. Matches
// rasterize_polygon.
bool point_in_polygon(const Polygon2D& polygon, const Point2& p);

// Distance from p to the nearest ring edge.
double distance_to_boundary(const Polygon2D& polygon, const Point2& p);

}  // namespace amodal
